//! Synthetic multi-domain benchmarks, source pretraining, the simulated
//! labeling oracle, and the two stream orders.
//!
//! The learner only ever sees [`StreamSample`]s: a stream index and a feature
//! vector. Labels and domain tags stay inside [`Benchmark`] and are reachable
//! through the evaluator-side accessors or the [`Oracle`].

mod dataset;
mod spec;

pub use dataset::{read_dataset_csv, write_dataset_csv};
pub use spec::{BenchmarkSpec, DomainSpec};
pub(crate) use spec::parse_kv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{accuracy, ce_loss_grad, sgd_step_in_place, InputNorm, LabeledSample, ModelParams, Shape};
use crate::rng::Rng;

/// An unlabeled stream element as seen by the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSample {
    /// Position in the pooled target training set.
    pub index: usize,
    pub features: Vec<f64>,
}

impl AsRef<[f64]> for StreamSample {
    fn as_ref(&self) -> &[f64] {
        &self.features
    }
}

/// Labeling authority. Every call is charged; repeated queries count again.
pub trait Oracle {
    fn label(&mut self, index: usize) -> Result<usize>;
    fn queries(&self) -> usize;
}

/// Ground-truth oracle over the pooled target training set.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    labels: Vec<usize>,
    queries: usize,
}

impl SimulatedOracle {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels, queries: 0 }
    }

    /// Restores the query counter from a checkpoint.
    pub fn set_queries(&mut self, queries: usize) {
        self.queries = queries;
    }
}

impl Oracle for SimulatedOracle {
    fn label(&mut self, index: usize) -> Result<usize> {
        let y = *self.labels.get(index).ok_or(Error::UnknownIndex(index))?;
        self.queries += 1;
        Ok(y)
    }

    fn queries(&self) -> usize {
        self.queries
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainData {
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

/// Generated (or loaded) data for the source and every target domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub dims: usize,
    pub classes: usize,
    /// Index 0 is the source.
    pub domains: Vec<DomainData>,
}

impl Benchmark {
    pub fn source(&self) -> &DomainData {
        &self.domains[0]
    }

    pub fn targets(&self) -> &[DomainData] {
        &self.domains[1..]
    }

    pub fn target_pool_len(&self) -> usize {
        self.targets().iter().map(|d| d.train.len()).sum()
    }

    /// Locates a pooled target index as `(target domain, 1-based; position)`.
    fn locate(&self, index: usize) -> Option<(usize, usize)> {
        let mut rest = index;
        for (k, d) in self.targets().iter().enumerate() {
            if rest < d.train.len() {
                return Some((k + 1, rest));
            }
            rest -= d.train.len();
        }
        None
    }

    /// Evaluator-only: ground-truth label of a pooled target sample.
    pub fn target_label(&self, index: usize) -> Result<usize> {
        let (k, i) = self.locate(index).ok_or(Error::UnknownIndex(index))?;
        Ok(self.domains[k].train[i].label)
    }

    /// Evaluator-only: domain (1-based) of a pooled target sample.
    pub fn target_domain(&self, index: usize) -> Result<usize> {
        Ok(self.locate(index).ok_or(Error::UnknownIndex(index))?.0)
    }

    /// Evaluator-only: the pooled target training set with true labels.
    pub fn target_pool(&self) -> Vec<LabeledSample> {
        self.targets().iter().flat_map(|d| d.train.iter().cloned()).collect()
    }

    /// Unlabeled view of the pooled target set, indexed like the stream.
    pub fn target_pool_unlabeled(&self) -> Vec<StreamSample> {
        self.targets()
            .iter()
            .flat_map(|d| d.train.iter())
            .enumerate()
            .map(|(index, s)| StreamSample { index, features: s.features.clone() })
            .collect()
    }

    pub fn oracle(&self) -> SimulatedOracle {
        SimulatedOracle::new(self.targets().iter().flat_map(|d| d.train.iter().map(|s| s.label)).collect())
    }
}

/// Orthonormal class directions scaled by `separation`.
fn class_means(spec: &BenchmarkSpec, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    while basis.len() < spec.classes {
        let mut v: Vec<f64> = (0..spec.dims).map(|_| rng.normal()).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis.into_iter().map(|b| b.into_iter().map(|x| x * spec.separation).collect()).collect()
}

fn sample_domain(
    spec: &BenchmarkSpec,
    means: &[Vec<f64>],
    domain: &DomainSpec,
    n: usize,
    rng: &mut Rng,
) -> Vec<LabeledSample> {
    (0..n)
        .map(|i| {
            // Balanced classes in a fixed cyclic order; streams shuffle later.
            let y = i % spec.classes;
            let x: Vec<f64> = means[y].iter().map(|m| m + spec.noise * domain.noise * rng.normal()).collect();
            let label = if domain.flip > 0.0 && rng.uniform() < domain.flip { (y + 1) % spec.classes } else { y };
            LabeledSample::new(domain.apply(&x), label)
        })
        .collect()
}

/// Generates every domain deterministically from `spec.seed`.
pub fn gen_benchmark(spec: &BenchmarkSpec) -> Result<Benchmark> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let means = class_means(spec, &mut root.derive(0));
    let domains = spec
        .domains
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let n_train = if k == 0 { spec.source_train } else { spec.target_train };
            let mut rng = root.derive(1 + k as u64);
            let train = sample_domain(spec, &means, d, n_train, &mut rng);
            let test = sample_domain(spec, &means, d, spec.test_size, &mut rng);
            DomainData { train, test }
        })
        .collect();
    Ok(Benchmark { dims: spec.dims, classes: spec.classes, domains })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub hidden: Option<usize>,
    /// Minimum source-train accuracy; below it pretraining fails.
    pub accuracy_floor: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { epochs: 40, lr: 0.5, batch_size: 32, hidden: None, accuracy_floor: 0.95 }
    }
}

/// Trains the source model with plain mini-batch SGD. Inputs are standardised
/// with source statistics that are frozen into the model.
pub fn pretrain_source(bench: &Benchmark, cfg: &PretrainConfig, rng: &mut Rng) -> Result<ModelParams> {
    let data = &bench.source().train;
    if data.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    if !(cfg.lr > 0.0) || cfg.batch_size == 0 {
        return Err(Error::config("pretraining needs lr > 0 and batch_size >= 1"));
    }
    let shape = Shape { input_dim: bench.dims, hidden: cfg.hidden, classes: bench.classes };
    let mut phi = ModelParams::init(shape, &mut rng.derive(0))?;
    phi.set_norm(Some(InputNorm::fit(data.iter().map(|s| s.features.as_slice()), bench.dims)?))?;
    for epoch in 0..cfg.epochs {
        let order = rng.derive(1 + epoch as u64).permutation(data.len());
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<LabeledSample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (_, g) = ce_loss_grad(&phi, &batch, &vec![1.0; batch.len()])?;
            sgd_step_in_place(&mut phi, &g, cfg.lr);
        }
    }
    let acc = accuracy(&phi, data)?;
    if acc < cfg.accuracy_floor {
        return Err(Error::AccuracyFloor { achieved: acc, floor: cfg.accuracy_floor });
    }
    Ok(phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamOrder {
    DomainWise,
    Random,
}

impl StreamOrder {
    pub fn as_str(&self) -> &'static str {
        match self {
            StreamOrder::DomainWise => "domain-wise",
            StreamOrder::Random => "random",
        }
    }
}

impl std::str::FromStr for StreamOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "domain-wise" => Ok(StreamOrder::DomainWise),
            "random" => Ok(StreamOrder::Random),
            other => Err(Error::config(format!("unknown stream order {other:?} (domain-wise | random)"))),
        }
    }
}

/// Number of reporting splits for the random order.
pub const RANDOM_SPLITS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct StreamBatch {
    pub samples: Vec<StreamSample>,
    /// Reporting segment: the target domain (0-based) for the domain-wise
    /// order, the split for the random order. Evaluator-only.
    pub segment: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub order: StreamOrder,
    pub batches: Vec<StreamBatch>,
    pub segments: usize,
}

impl Stream {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[StreamSample]> {
        self.batches.iter().map(|b| b.samples.as_slice())
    }

    pub fn sample_count(&self) -> usize {
        self.batches.iter().map(|b| b.samples.len()).sum()
    }
}

/// Splits `0..n` into `parts` contiguous ranges whose sizes differ by at most one.
pub fn even_partition(n: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let (base, extra) = (n / parts, n % parts);
    let mut start = 0;
    (0..parts)
        .map(|p| {
            let len = base + usize::from(p < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

pub fn make_stream(bench: &Benchmark, order: StreamOrder, batch_size: usize, seed: u64) -> Result<Stream> {
    if batch_size == 0 {
        return Err(Error::config("batch_size must be at least 1"));
    }
    let pool = bench.target_pool_unlabeled();
    let mut segments_of_samples: Vec<Vec<StreamSample>> = Vec::new();
    match order {
        StreamOrder::DomainWise => {
            let mut start = 0;
            for d in bench.targets() {
                segments_of_samples.push(pool[start..start + d.train.len()].to_vec());
                start += d.train.len();
            }
        }
        StreamOrder::Random => {
            let perm = Rng::new(seed).derive(0x57_2EA4).permutation(pool.len());
            for r in even_partition(perm.len(), RANDOM_SPLITS) {
                segments_of_samples.push(perm[r].iter().map(|&i| pool[i].clone()).collect());
            }
        }
    }
    let segments = segments_of_samples.len();
    let batches = segments_of_samples
        .into_iter()
        .enumerate()
        .flat_map(|(segment, samples)| {
            samples.chunks(batch_size).map(|c| StreamBatch { samples: c.to_vec(), segment }).collect::<Vec<_>>()
        })
        .collect();
    Ok(Stream { order, batches, segments })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> BenchmarkSpec {
        BenchmarkSpec { source_train: 400, target_train: 120, test_size: 60, ..BenchmarkSpec::synth4() }
    }

    #[test]
    fn oracle_counts_every_query() {
        let mut o = SimulatedOracle::new(vec![2, 0, 1]);
        assert_eq!(o.label(1).unwrap(), 0);
        assert_eq!(o.label(1).unwrap(), 0);
        assert_eq!(o.label(2).unwrap(), 1);
        assert_eq!(o.queries(), 3);
        assert!(matches!(o.label(3), Err(Error::UnknownIndex(3))));
        assert_eq!(o.queries(), 3);
    }

    #[test]
    fn generation_is_deterministic_and_sized() {
        let spec = small_spec();
        let a = gen_benchmark(&spec).unwrap();
        assert_eq!(a, gen_benchmark(&spec).unwrap());
        assert_eq!(a.domains.len(), 4);
        assert_eq!(a.source().train.len(), 400);
        assert!(a.targets().iter().all(|d| d.train.len() == 120 && d.test.len() == 60));
        assert_eq!(a.target_pool_len(), 360);
        assert_eq!(a.target_domain(119).unwrap(), 1);
        assert_eq!(a.target_domain(120).unwrap(), 2);
        assert!(a.target_label(360).is_err());
    }

    #[test]
    fn identity_target_matches_source_distribution() {
        let mut spec = small_spec();
        spec.domains = vec![DomainSpec::identity(), DomainSpec::identity()];
        let b = gen_benchmark(&spec).unwrap();
        let mean = |xs: &[LabeledSample]| -> Vec<f64> {
            let mut m = vec![0.0; spec.dims];
            for s in xs {
                m.iter_mut().zip(&s.features).for_each(|(a, b)| *a += b / xs.len() as f64);
            }
            m
        };
        let (ms, mt) = (mean(&b.source().train), mean(&b.targets()[0].train));
        // Same class means and noise: feature means agree up to sampling error.
        for (a, c) in ms.iter().zip(&mt) {
            assert!((a - c).abs() < 0.35, "{a} vs {c}");
        }
    }

    #[test]
    fn half_turn_on_two_symmetric_classes_swaps_labels() {
        let spec = BenchmarkSpec {
            dims: 2,
            classes: 2,
            source_train: 400,
            target_train: 200,
            test_size: 200,
            domains: vec![
                DomainSpec::identity(),
                DomainSpec { rotation_deg: 180.0, ..DomainSpec::identity() },
            ],
            ..BenchmarkSpec::synth4()
        };
        let b = gen_benchmark(&spec).unwrap();
        let phi = pretrain_source(&b, &PretrainConfig { accuracy_floor: 0.0, ..Default::default() }, &mut Rng::new(1)).unwrap();
        let src = accuracy(&phi, &b.source().test).unwrap();
        let tgt = accuracy(&phi, &b.targets()[0].test).unwrap();
        assert!(src > 0.95, "source {src}");
        // x -> -x maps each class mean past the decision boundary.
        assert!(tgt < 0.1, "target {tgt} source {src}");
    }

    #[test]
    fn pretraining_is_deterministic_and_meets_floor() {
        let b = gen_benchmark(&small_spec()).unwrap();
        let cfg = PretrainConfig::default();
        let a = pretrain_source(&b, &cfg, &mut Rng::new(3)).unwrap();
        let c = pretrain_source(&b, &cfg, &mut Rng::new(3)).unwrap();
        assert_eq!(a, c);
        assert!(accuracy(&a, &b.source().train).unwrap() >= 0.99);
        let zero = PretrainConfig { epochs: 0, ..cfg };
        assert!(matches!(pretrain_source(&b, &zero, &mut Rng::new(3)), Err(Error::AccuracyFloor { .. })));
    }

    #[test]
    fn domain_wise_segments_are_pure() {
        let b = gen_benchmark(&small_spec()).unwrap();
        let s = make_stream(&b, StreamOrder::DomainWise, 50, 0).unwrap();
        assert_eq!(s.segments, 3);
        for batch in &s.batches {
            for x in &batch.samples {
                assert_eq!(b.target_domain(x.index).unwrap(), batch.segment + 1);
            }
        }
        assert_eq!(s.sample_count(), 360);
    }

    #[test]
    fn random_order_is_seeded_and_evenly_split() {
        let b = gen_benchmark(&BenchmarkSpec { target_train: 101, ..small_spec() }).unwrap();
        let a = make_stream(&b, StreamOrder::Random, 40, 9).unwrap();
        assert_eq!(a, make_stream(&b, StreamOrder::Random, 40, 9).unwrap());
        assert_ne!(a, make_stream(&b, StreamOrder::Random, 40, 10).unwrap());
        let mut sizes = vec![0usize; RANDOM_SPLITS];
        for batch in &a.batches {
            sizes[batch.segment] += batch.samples.len();
        }
        assert_eq!(sizes.iter().sum::<usize>(), 303);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut seen: Vec<usize> = a.batches.iter().flat_map(|b| b.samples.iter().map(|s| s.index)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..303).collect::<Vec<_>>());
    }

    #[test]
    fn even_partition_sizes() {
        let r = even_partition(10, 4);
        assert_eq!(r.iter().map(|r| r.len()).collect::<Vec<_>>(), vec![3, 3, 2, 2]);
        assert_eq!(r[3].end, 10);
    }
}
