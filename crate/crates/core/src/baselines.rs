//! Comparison methods: the unadapted source model, per-batch input
//! recalibration, streaming entropy minimisation, and one-shot active
//! selection over the pooled target set.

use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cluster::{sq_dist, KMeans};
use crate::engine::{balanced_finetune, FinetuneConfig, WeightPlan};
use crate::error::{Error, Result};
use crate::model::{Gradient, InputNorm, LabeledSample, ModelParams, ProbVector};
use crate::report::{evaluate_domains, RunReport, StepRecord};
use crate::rng::Rng;
use crate::streams::{Benchmark, Oracle, Stream, StreamSample};

/// Test accuracy of the unmodified source model on every domain.
pub fn source_only_eval(phi: &ModelParams, bench: &Benchmark) -> Result<Vec<f64>> {
    evaluate_domains(phi, bench)
}

/// Predictions of `phi` with its input statistics replaced by those of the
/// batch itself.
pub fn stats_recalibrate<X: AsRef<[f64]>>(phi: &ModelParams, batch: &[X]) -> Result<Vec<ProbVector>> {
    if batch.len() < 2 {
        return Err(Error::InsufficientSamples { need: 2, got: batch.len() });
    }
    let norm = InputNorm::fit(batch.iter().map(|x| x.as_ref()), phi.input_dim())?;
    batch.iter().map(|x| phi.predict_proba_with_norm(x.as_ref(), &norm)).collect()
}

/// `steps` gradient steps on the mean prediction entropy of `batch`.
pub fn entropy_min_adapt<X: AsRef<[f64]>>(theta: &ModelParams, batch: &[X], steps: usize, lr: f64) -> Result<ModelParams> {
    if steps == 0 {
        return Err(Error::config("entropy minimisation needs at least one step"));
    }
    if !(lr > 0.0) {
        return Err(Error::config("lr must be positive"));
    }
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut params = theta.clone();
    let scale = 1.0 / batch.len() as f64;
    for _ in 0..steps {
        let mut grad = Gradient::zeros(params.shape());
        for x in batch {
            let x = x.as_ref();
            if x.len() != params.input_dim() {
                return Err(Error::DimensionMismatch { expected: params.input_dim(), got: x.len() });
            }
            params.accumulate_entropy(x, scale, &mut grad.data);
        }
        crate::model::sgd_step_in_place(&mut params, &grad, lr);
    }
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKind {
    Random,
    EntropyTopk,
    Kmeans,
    Clue,
}

impl SelectorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SelectorKind::Random => "random",
            SelectorKind::EntropyTopk => "entropy",
            SelectorKind::Kmeans => "kmeans",
            SelectorKind::Clue => "clue",
        }
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SelectorKind::Random),
            "entropy" | "entropy-topk" => Ok(SelectorKind::EntropyTopk),
            "kmeans" => Ok(SelectorKind::Kmeans),
            "clue" => Ok(SelectorKind::Clue),
            other => Err(Error::config(format!("unknown selector {other:?}"))),
        }
    }
}

/// Floor on CLUE sample weights so confident samples still count as points.
const CLUE_MIN_WEIGHT: f64 = 1e-12;

/// For each centroid, the closest not-yet-chosen point (ties to the lowest
/// index), in centroid order.
fn centroid_representatives(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    let mut taken = vec![false; points.len()];
    let mut out = Vec::with_capacity(centroids.len());
    for c in centroids {
        let mut best: Option<(f64, usize)> = None;
        for (i, p) in points.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = sq_dist(p, c);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        if let Some((_, i)) = best {
            taken[i] = true;
            out.push(i);
        }
    }
    out
}

/// Chooses `budget` pool positions. Cluster-based selectors return one
/// representative per cluster, largest total weight first.
pub fn select_samples(
    kind: SelectorKind,
    pool: &[StreamSample],
    theta: &ModelParams,
    budget: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if budget > pool.len() {
        return Err(Error::BudgetExceedsPool { budget, pool: pool.len() });
    }
    if budget == 0 {
        return Ok(Vec::new());
    }
    let entropies = || -> Result<Vec<f64>> { pool.iter().map(|s| Ok(theta.predict_proba(&s.features)?.entropy())).collect() };
    match kind {
        SelectorKind::Random => Ok(rng.permutation(pool.len()).into_iter().take(budget).collect()),
        SelectorKind::EntropyTopk => {
            let h = entropies()?;
            let mut idx: Vec<usize> = (0..pool.len()).collect();
            idx.sort_by(|&a, &b| h[b].total_cmp(&h[a]).then(a.cmp(&b)));
            idx.truncate(budget);
            Ok(idx)
        }
        SelectorKind::Kmeans | SelectorKind::Clue => {
            let points = pool.iter().map(|s| theta.penultimate(&s.features)).collect::<Result<Vec<_>>>()?;
            let weights = match kind {
                SelectorKind::Clue => entropies()?.into_iter().map(|h| h.max(CLUE_MIN_WEIGHT)).collect(),
                _ => vec![1.0; pool.len()],
            };
            let fit = KMeans::new(budget).fit(&points, &weights, rng)?;
            let mut mass = vec![0.0; budget];
            for (i, &a) in fit.assignments.iter().enumerate() {
                mass[a] += weights[i];
            }
            let mut order: Vec<usize> = (0..budget).collect();
            order.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
            let centroids: Vec<Vec<f64>> = order.iter().map(|&c| fit.centroids[c].clone()).collect();
            Ok(centroid_representatives(&points, &centroids))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TentConfig {
    pub steps: usize,
    pub lr: f64,
}

impl Default for TentConfig {
    fn default() -> Self {
        Self { steps: 1, lr: 3.0 }
    }
}

/// Scores each batch with `predict`, then lets `update` adapt the model.
fn run_streaming(
    method: &str,
    phi: &ModelParams,
    bench: &Benchmark,
    stream: &Stream,
    seed: u64,
    mut predict: impl FnMut(&ModelParams, &[StreamSample]) -> Result<Vec<usize>>,
    mut update: impl FnMut(&mut ModelParams, &[StreamSample]) -> Result<()>,
) -> Result<(RunReport, ModelParams)> {
    let started = Instant::now();
    let mut theta = phi.clone();
    let mut steps = Vec::with_capacity(stream.len());
    for (t, batch) in stream.batches.iter().enumerate() {
        let preds = predict(&theta, &batch.samples)?;
        let mut correct = 0;
        for (s, p) in batch.samples.iter().zip(&preds) {
            if bench.target_label(s.index)? == *p {
                correct += 1;
            }
        }
        update(&mut theta, &batch.samples)?;
        steps.push(StepRecord {
            t,
            segment: batch.segment,
            batch_size: batch.samples.len(),
            correct,
            realtime_accuracy: correct as f64 / batch.samples.len() as f64,
            budget_used: 0,
            nc: 0,
            lambda0: f64::NAN,
            w0: f64::NAN,
            inner_steps: 0,
            low: 0,
            high: 0,
            new_anchors: 0,
        });
    }
    let pre = evaluate_domains(phi, bench)?;
    let post = evaluate_domains(&theta, bench)?;
    let mut report = RunReport::new(method, stream, seed, steps, pre, post);
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((report, theta))
}

fn argmax_all(model: &ModelParams, batch: &[StreamSample]) -> Result<Vec<usize>> {
    batch.iter().map(|s| model.predict(&s.features)).collect()
}

pub fn run_source_only(phi: &ModelParams, bench: &Benchmark, stream: &Stream, seed: u64) -> Result<RunReport> {
    Ok(run_streaming("source-only", phi, bench, stream, seed, argmax_all, |_, _| Ok(()))?.0)
}

/// Per-batch recalibration. Post-adaptation accuracy recalibrates each test
/// split in chunks of `eval_batch` samples.
pub fn run_stats_adapt(phi: &ModelParams, bench: &Benchmark, stream: &Stream, seed: u64, eval_batch: usize) -> Result<RunReport> {
    let recal = |m: &ModelParams, b: &[StreamSample]| -> Result<Vec<usize>> {
        if b.len() < 2 {
            return argmax_all(m, b);
        }
        Ok(stats_recalibrate(m, b)?.iter().map(|p| p.argmax()).collect())
    };
    let (mut report, _) = run_streaming("stats-adapt", phi, bench, stream, seed, recal, |_, _| Ok(()))?;
    report.post_accuracy = bench
        .domains
        .iter()
        .map(|d| recalibrated_accuracy(phi, &d.test, eval_batch))
        .collect::<Result<Vec<_>>>()?;
    Ok(report)
}

fn recalibrated_accuracy(phi: &ModelParams, data: &[LabeledSample], chunk: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut correct = 0;
    for part in data.chunks(chunk.max(2)) {
        let xs: Vec<&[f64]> = part.iter().map(|s| s.features.as_slice()).collect();
        let preds: Vec<usize> = if xs.len() < 2 {
            xs.iter().map(|x| phi.predict(x)).collect::<Result<_>>()?
        } else {
            stats_recalibrate(phi, &xs)?.iter().map(|p| p.argmax()).collect()
        };
        correct += part.iter().zip(preds).filter(|(s, p)| s.label == *p).count();
    }
    Ok(correct as f64 / data.len() as f64)
}

pub fn run_tent(phi: &ModelParams, bench: &Benchmark, stream: &Stream, cfg: &TentConfig, seed: u64) -> Result<RunReport> {
    let method = format!("tent-{}", cfg.steps);
    let update = |m: &mut ModelParams, b: &[StreamSample]| -> Result<()> {
        *m = entropy_min_adapt(m, b, cfg.steps, cfg.lr)?;
        Ok(())
    };
    Ok(run_streaming(&method, phi, bench, stream, seed, argmax_all, update)?.0)
}

/// One-shot selection of `budget` samples from the pooled target set, labeled
/// by the oracle, then fine-tuning of `phi` on the selection alone. The
/// report has no per-step rows.
pub fn run_ada(
    kind: SelectorKind,
    phi: &ModelParams,
    bench: &Benchmark,
    stream: &Stream,
    budget: usize,
    finetune: &FinetuneConfig,
    seed: u64,
) -> Result<RunReport> {
    let started = Instant::now();
    let pool = bench.target_pool_unlabeled();
    let root = Rng::new(seed);
    let chosen = select_samples(kind, &pool, phi, budget, &mut root.derive(1))?;
    let mut oracle = bench.oracle();
    let mut data = Vec::with_capacity(chosen.len());
    for &i in &chosen {
        data.push(LabeledSample::new(pool[i].features.clone(), oracle.label(pool[i].index)?));
    }
    let model = if data.is_empty() {
        phi.clone()
    } else {
        let plan = WeightPlan { lambda0: 0.0, w0: 0.0 };
        balanced_finetune(phi, &[], &data, &plan, finetune, &mut root.derive(2))?.params
    };
    let pre = evaluate_domains(phi, bench)?;
    let post = evaluate_domains(&model, bench)?;
    let mut report = RunReport::new(kind.as_str(), stream, seed, Vec::new(), pre, post);
    report.budget_used = chosen.len();
    report.oracle_queries = oracle.queries();
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Shape;

    fn pool_of(rows: Vec<Vec<f64>>) -> Vec<StreamSample> {
        rows.into_iter().enumerate().map(|(index, features)| StreamSample { index, features }).collect()
    }

    #[test]
    fn recalibration_removes_shift() {
        let mut rng = Rng::new(0);
        let mut phi = ModelParams::init(Shape::linear(3, 3), &mut rng).unwrap();
        phi.set_norm(None).unwrap();
        let xs: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.normal()).collect()).collect();
        let shifted: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().map(|v| v + 5.0).collect()).collect();
        let a = stats_recalibrate(&phi, &xs).unwrap();
        let b = stats_recalibrate(&phi, &shifted).unwrap();
        for (p, q) in a.iter().zip(&b) {
            for (u, v) in p.as_slice().iter().zip(q.as_slice()) {
                assert!((u - v).abs() < 1e-9);
            }
        }
        assert!(stats_recalibrate(&phi, &xs[..1]).is_err());
    }

    #[test]
    fn standardised_batch_is_unchanged() {
        let phi = ModelParams::init(Shape::linear(1, 2), &mut Rng::new(1)).unwrap();
        let xs = vec![vec![-1.0], vec![1.0]];
        let base: Vec<ProbVector> = xs.iter().map(|x| phi.predict_proba(x).unwrap()).collect();
        assert_eq!(stats_recalibrate(&phi, &xs).unwrap(), base);
    }

    #[test]
    fn entropy_min_contract() {
        let mut phi = ModelParams::zeros(Shape::linear(2, 2)).unwrap();
        assert!(entropy_min_adapt(&phi, &[vec![1.0, 0.0]], 0, 0.1).is_err());
        // Confident model: vanishing gradient.
        phi.out_bias_mut()[0] = 60.0;
        let out = entropy_min_adapt(&phi, &[vec![0.3, -0.2], vec![1.0, 2.0]], 5, 0.1).unwrap();
        for (a, b) in out.as_slice().iter().zip(phi.as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn selector_budget_rules() {
        let phi = ModelParams::zeros(Shape::linear(1, 2)).unwrap();
        let pool = pool_of((0..6).map(|i| vec![i as f64]).collect());
        for kind in [SelectorKind::Random, SelectorKind::EntropyTopk, SelectorKind::Kmeans, SelectorKind::Clue] {
            let mut all = select_samples(kind, &pool, &phi, 6, &mut Rng::new(2)).unwrap();
            all.sort_unstable();
            assert_eq!(all, (0..6).collect::<Vec<_>>(), "{kind:?}");
            assert!(matches!(
                select_samples(kind, &pool, &phi, 7, &mut Rng::new(2)),
                Err(Error::BudgetExceedsPool { .. })
            ));
        }
    }

    #[test]
    fn entropy_topk_picks_the_uncertain_sample() {
        // Bias makes x = 0 uniform and |x| large confident.
        let mut phi = ModelParams::zeros(Shape::linear(1, 2)).unwrap();
        phi.set_out_weight(0, 0, 20.0);
        let pool = pool_of(vec![vec![5.0], vec![0.0], vec![-5.0], vec![4.0]]);
        assert_eq!(select_samples(SelectorKind::EntropyTopk, &pool, &phi, 1, &mut Rng::new(0)).unwrap(), vec![1]);
    }

    #[test]
    fn clue_prefers_the_uncertain_cluster() {
        // Two equal clusters: one near x = 0 (H = ln 2), one near x = 3 (H ~ 0.19).
        let mut phi = ModelParams::zeros(Shape::linear(1, 2)).unwrap();
        phi.set_out_weight(0, 0, 1.0);
        let rows = vec![vec![-0.1], vec![0.0], vec![0.1], vec![2.9], vec![3.0], vec![3.1]];
        let pool = pool_of(rows);
        let picks = select_samples(SelectorKind::Clue, &pool, &phi, 2, &mut Rng::new(3)).unwrap();
        assert_eq!(picks[0], 1);
        assert_eq!(picks[1], 4);
    }

    #[test]
    fn selector_names_round_trip() {
        for kind in [SelectorKind::Random, SelectorKind::EntropyTopk, SelectorKind::Kmeans, SelectorKind::Clue] {
            assert_eq!(kind.as_str().parse::<SelectorKind>().unwrap(), kind);
        }
        assert!("coreset".parse::<SelectorKind>().is_err());
    }
}
