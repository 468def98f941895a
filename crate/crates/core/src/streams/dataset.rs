//! Dataset CSV: header `f0,..,f{d-1},label,domain,split`, one row per sample.
//! `domain` 0 is the source; `split` is `train` or `test`. Rows appear in
//! domain order, train before test, preserving sample order.

use std::fmt::Write as _;
use std::path::Path;

use super::{Benchmark, DomainData};
use crate::error::{Error, Result};
use crate::model::LabeledSample;

pub fn dataset_csv_string(bench: &Benchmark) -> String {
    let mut out = String::new();
    for i in 0..bench.dims {
        let _ = write!(out, "f{i},");
    }
    out.push_str("label,domain,split\n");
    for (k, d) in bench.domains.iter().enumerate() {
        for (split, rows) in [("train", &d.train), ("test", &d.test)] {
            for s in rows.iter() {
                for v in &s.features {
                    // `{:?}` is the shortest representation that round-trips.
                    let _ = write!(out, "{v:?},");
                }
                let _ = writeln!(out, "{},{k},{split}", s.label);
            }
        }
    }
    out
}

pub fn write_dataset_csv(bench: &Benchmark, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_csv_string(bench)).map_err(|e| Error::io(path, e))
}

pub fn parse_dataset_csv(text: &str, path: &str) -> Result<Benchmark> {
    let err = |line: usize, msg: String| Error::Parse { path: path.into(), line, msg };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[cols.len() - 3..] != ["label", "domain", "split"] {
        return Err(err(1, "header must end with label,domain,split".into()));
    }
    let dims = cols.len() - 3;
    if cols[..dims].iter().enumerate().any(|(i, c)| *c != format!("f{i}")) {
        return Err(err(1, "feature columns must be f0..f{d-1}".into()));
    }
    let mut domains: Vec<DomainData> = Vec::new();
    let mut classes = 0usize;
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != dims + 3 {
            return Err(err(line, format!("expected {} fields, got {}", dims + 3, fields.len())));
        }
        let features = fields[..dims]
            .iter()
            .map(|f| f.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| err(line, "non-numeric feature".into()))?;
        let label: usize = fields[dims].trim().parse().map_err(|_| err(line, "bad label".into()))?;
        let domain: usize = fields[dims + 1].trim().parse().map_err(|_| err(line, "bad domain".into()))?;
        if domain > domains.len() {
            return Err(err(line, format!("domain {domain} appears before domain {}", domains.len())));
        }
        if domain == domains.len() {
            domains.push(DomainData { train: Vec::new(), test: Vec::new() });
        }
        classes = classes.max(label + 1);
        let sample = LabeledSample::new(features, label);
        match fields[dims + 2].trim() {
            "train" => domains[domain].train.push(sample),
            "test" => domains[domain].test.push(sample),
            other => return Err(err(line, format!("split must be train or test, got {other:?}"))),
        }
    }
    if domains.is_empty() {
        return Err(err(2, "no rows".into()));
    }
    Ok(Benchmark { dims, classes: classes.max(2), domains })
}

pub fn read_dataset_csv(path: &Path) -> Result<Benchmark> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset_csv(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::{gen_benchmark, BenchmarkSpec};
    use sha2::{Digest, Sha256};

    #[test]
    fn csv_preserves_benchmark() {
        let spec = BenchmarkSpec { source_train: 40, target_train: 12, test_size: 8, ..BenchmarkSpec::synth4() };
        let b = gen_benchmark(&spec).unwrap();
        let text = dataset_csv_string(&b);
        assert!(text.starts_with("f0,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10,f11,f12,f13,f14,f15,label,domain,split\n"));
        assert_eq!(parse_dataset_csv(&text, "mem").unwrap(), b);
    }

    #[test]
    fn synth4_seed7_checksum() {
        let b = gen_benchmark(&BenchmarkSpec::synth4()).unwrap();
        let digest = hex::encode(Sha256::digest(dataset_csv_string(&b).as_bytes()));
        assert_eq!(digest, "b51bcfcf9ec7698d5f0592b1bb899b24c3519a48d6b2f9ab5ed6523b148aca8c");
    }

    #[test]
    fn rejects_malformed_rows() {
        assert!(parse_dataset_csv("", "mem").is_err());
        assert!(parse_dataset_csv("a,b\n", "mem").is_err());
        assert!(parse_dataset_csv("f0,label,domain,split\n1.0,0,1,train\n", "mem").is_err());
        assert!(parse_dataset_csv("f0,label,domain,split\nx,0,0,train\n", "mem").is_err());
        assert!(parse_dataset_csv("f0,label,domain,split\n1.0,0,0,valid\n", "mem").is_err());
        assert!(parse_dataset_csv("f0,label,domain,split\n1.0,0,0,train\n", "mem").is_ok());
    }
}
