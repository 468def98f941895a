//! Run reports and their on-disk form.
//!
//! `write_report` emits three byte-stable files (`metrics.jsonl`,
//! `summary.csv`, `config.resolved`) plus `timing.json`, which holds the only
//! non-deterministic quantity (wall time) and is kept apart for that reason.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{accuracy, ModelParams};
use crate::streams::{Benchmark, Stream};

pub const SUMMARY_HEADER: &str = "method,stream,seed,budget_used,phase,segment,accuracy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub segment: usize,
    pub batch_size: usize,
    pub correct: usize,
    /// Accuracy of the pre-update model on this batch.
    pub realtime_accuracy: f64,
    pub budget_used: usize,
    pub nc: usize,
    /// `None` when the step had no training data.
    #[serde(deserialize_with = "nan_as_none")]
    pub lambda0: f64,
    #[serde(deserialize_with = "nan_as_none")]
    pub w0: f64,
    pub inner_steps: usize,
    pub low: usize,
    pub high: usize,
    pub new_anchors: usize,
}

/// Non-finite values serialise as JSON `null`; read them back as NaN.
fn nan_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub stream: String,
    pub seed: u64,
    pub segments: usize,
    pub steps: Vec<StepRecord>,
    /// Test accuracy of the source model per domain (index 0 = source).
    pub pre_accuracy: Vec<f64>,
    /// Test accuracy of the final model per domain.
    pub post_accuracy: Vec<f64>,
    pub budget_used: usize,
    pub oracle_queries: usize,
    pub config_hash: String,
    pub config_resolved: String,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl RunReport {
    pub fn new(
        method: &str,
        stream: &Stream,
        seed: u64,
        steps: Vec<StepRecord>,
        pre_accuracy: Vec<f64>,
        post_accuracy: Vec<f64>,
    ) -> Self {
        Self {
            method: method.to_string(),
            stream: stream.order.as_str().to_string(),
            seed,
            segments: stream.segments,
            steps,
            pre_accuracy,
            post_accuracy,
            budget_used: 0,
            oracle_queries: 0,
            config_hash: String::new(),
            config_resolved: String::new(),
            wall_time_secs: 0.0,
        }
    }

    /// Attaches the resolved configuration and its hash.
    pub fn with_config(mut self, resolved: &str) -> Self {
        self.config_hash = config_hash(resolved);
        self.config_resolved = resolved.to_string();
        self
    }

    /// Mean post-adaptation accuracy over the target domains.
    pub fn mean_target_accuracy(&self) -> f64 {
        let t = self.post_accuracy.get(1..).unwrap_or(&[]);
        if t.is_empty() {
            return f64::NAN;
        }
        t.iter().sum::<f64>() / t.len() as f64
    }

    /// Source accuracy lost relative to the source model.
    pub fn source_drop(&self) -> f64 {
        match (self.pre_accuracy.first(), self.post_accuracy.first()) {
            (Some(a), Some(b)) => a - b,
            _ => f64::NAN,
        }
    }

    /// Real-time accuracy pooled over each reporting segment.
    pub fn segment_accuracy(&self) -> Vec<f64> {
        let mut hits = vec![(0usize, 0usize); self.segments];
        for s in &self.steps {
            if let Some(h) = hits.get_mut(s.segment) {
                h.0 += s.correct;
                h.1 += s.batch_size;
            }
        }
        hits.into_iter().map(|(c, n)| if n == 0 { f64::NAN } else { c as f64 / n as f64 }).collect()
    }

    /// Real-time accuracy pooled over the whole stream.
    pub fn realtime_accuracy(&self) -> f64 {
        let (c, n) = self.steps.iter().fold((0, 0), |(c, n), s| (c + s.correct, n + s.batch_size));
        if n == 0 {
            f64::NAN
        } else {
            c as f64 / n as f64
        }
    }

    pub fn metrics_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        let prefix = format!("{},{},{},{}", self.method, self.stream, self.seed, self.budget_used);
        if !self.steps.is_empty() {
            for (i, a) in self.segment_accuracy().iter().enumerate() {
                let _ = writeln!(out, "{prefix},current,{},{a:.6}", i + 1);
            }
        }
        for (k, a) in self.post_accuracy.iter().enumerate() {
            let _ = writeln!(out, "{prefix},post,{},{a:.6}", domain_name(k));
        }
        out
    }
}

pub fn domain_name(k: usize) -> String {
    if k == 0 {
        "source".into()
    } else {
        format!("target-{k}")
    }
}

/// Hex SHA-256 of the resolved configuration text.
pub fn config_hash(resolved: &str) -> String {
    hex::encode(Sha256::digest(resolved.as_bytes()))
}

/// Test accuracy of `model` on every domain of `bench`.
pub fn evaluate_domains(model: &ModelParams, bench: &Benchmark) -> Result<Vec<f64>> {
    bench.domains.iter().map(|d| accuracy(model, &d.test)).collect()
}

pub fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    write("metrics.jsonl", report.metrics_jsonl()?)?;
    write("summary.csv", report.summary_csv())?;
    write("config.resolved", report.config_resolved.clone())?;
    write("timing.json", serde_json::json!({ "wall_time_secs": report.wall_time_secs }).to_string() + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
struct SummaryRow {
    method: String,
    stream: String,
    budget_used: String,
    phase: String,
    segment: String,
    accuracy: f64,
}

fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SUMMARY_HEADER => {}
        _ => return Err(Error::Parse { path: name, line: 1, msg: "not a summary.csv".into() }),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = |msg: &str| Error::Parse { path: name.clone(), line: i + 1, msg: msg.into() };
            if f.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            Ok(SummaryRow {
                method: f[0].into(),
                stream: f[1].into(),
                budget_used: f[3].into(),
                phase: f[4].into(),
                segment: f[5].into(),
                accuracy: f[6].parse().map_err(|_| bad("bad accuracy"))?,
            })
        })
        .collect()
}

/// Side-by-side table over several run directories: one row per run, columns
/// for each real-time segment followed by post-adaptation domains and the
/// realized budget. Values are percentages; seeds of one method are averaged.
pub fn compare_runs(dirs: &[&Path]) -> Result<String> {
    let mut columns: Vec<(String, String)> = Vec::new();
    let mut runs: BTreeMap<(String, String), (String, BTreeMap<(String, String), Vec<f64>>)> = BTreeMap::new();
    let mut order: Vec<(String, String)> = Vec::new();
    for dir in dirs {
        for row in read_summary(&dir.join("summary.csv"))? {
            let col = (row.phase.clone(), row.segment.clone());
            if !columns.contains(&col) {
                columns.push(col.clone());
            }
            let key = (row.method.clone(), row.stream.clone());
            if !runs.contains_key(&key) {
                order.push(key.clone());
            }
            let entry = runs.entry(key).or_insert_with(|| (row.budget_used.clone(), BTreeMap::new()));
            entry.1.entry(col).or_default().push(row.accuracy);
        }
    }
    // Current-domain columns first, then post-adaptation, each in first-seen order.
    columns.sort_by_key(|(phase, _)| phase != "current");
    let mut out = String::from("method,stream,budget");
    for (phase, seg) in &columns {
        let _ = write!(out, ",{phase}:{seg}");
    }
    out.push('\n');
    for key in order {
        let (budget, cells) = &runs[&key];
        let _ = write!(out, "{},{},{}", key.0, key.1, budget);
        for col in &columns {
            match cells.get(col) {
                Some(v) => {
                    let _ = write!(out, ",{:.2}", 100.0 * v.iter().sum::<f64>() / v.len() as f64);
                }
                None => out.push_str(",-"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::StreamOrder;

    fn step(t: usize, segment: usize, correct: usize) -> StepRecord {
        StepRecord {
            t,
            segment,
            batch_size: 10,
            correct,
            realtime_accuracy: correct as f64 / 10.0,
            budget_used: t,
            nc: 10,
            lambda0: f64::NAN,
            w0: 0.5,
            inner_steps: 3,
            low: 1,
            high: 2,
            new_anchors: 1,
        }
    }

    fn report(steps: Vec<StepRecord>) -> RunReport {
        let stream = Stream { order: StreamOrder::DomainWise, batches: Vec::new(), segments: 2 };
        RunReport::new("simatta", &stream, 3, steps, vec![0.9, 0.5], vec![0.85, 0.75])
    }

    #[test]
    fn empty_report_is_header_only() {
        let stream = Stream { order: StreamOrder::Random, batches: Vec::new(), segments: 4 };
        let r = RunReport::new("x", &stream, 0, Vec::new(), Vec::new(), Vec::new());
        assert_eq!(r.summary_csv(), format!("{SUMMARY_HEADER}\n"));
        assert_eq!(r.metrics_jsonl().unwrap(), "");
    }

    #[test]
    fn summary_rows_and_aggregates() {
        let r = report(vec![step(0, 0, 5), step(1, 0, 7), step(2, 1, 9)]);
        assert_eq!(r.segment_accuracy(), vec![0.6, 0.9]);
        assert!((r.realtime_accuracy() - 0.7).abs() < 1e-12);
        assert!((r.mean_target_accuracy() - 0.75).abs() < 1e-12);
        assert!((r.source_drop() - 0.05).abs() < 1e-12);
        let csv = r.summary_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "simatta,domain-wise,3,0,current,1,0.600000");
        assert_eq!(lines[3], "simatta,domain-wise,3,0,post,source,0.850000");
        assert_eq!(lines[4], "simatta,domain-wise,3,0,post,target-1,0.750000");
    }

    #[test]
    fn metrics_lines_round_trip_nan_as_null() {
        let r = report(vec![step(0, 0, 5)]);
        let line = r.metrics_jsonl().unwrap();
        assert!(line.contains("\"lambda0\":null"));
        let back: StepRecord = serde_json::from_str(line.trim()).unwrap();
        assert!(back.lambda0.is_nan());
        assert_eq!(back.w0, 0.5);
    }

    #[test]
    fn compare_two_runs() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        write_report(&report(vec![step(0, 0, 5)]), &a).unwrap();
        let mut other = report(Vec::new());
        other.method = "random".into();
        write_report(&other, &b).unwrap();
        let table = compare_runs(&[&a, &b]).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "method,stream,budget,current:1,current:2,post:source,post:target-1");
        assert_eq!(lines[1], "simatta,domain-wise,0,50.00,NaN,85.00,75.00");
        assert_eq!(lines[2], "random,domain-wise,0,-,-,85.00,75.00");
    }

    #[test]
    fn config_hash_is_stable() {
        assert_eq!(config_hash("a = 1\n"), config_hash("a = 1\n"));
        assert_ne!(config_hash("a = 1\n"), config_hash("a = 2\n"));
        assert_eq!(config_hash("").len(), 64);
    }
}
