//! The adaptation loop.
//!
//! Per step: predict with the current model, gate the batch by entropy, grow
//! the pseudo-labeled source-like set, select and label anchors by incremental
//! clustering under the budget, derive the balancing pair `(lambda0, w0)`,
//! fine-tune on both sets with the two-term loss, then raise the cluster count.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cluster::{anchor_budget_guard, ic_commit, ic_plan, AnchorSet, IcConfig};
use crate::error::{Error, Result};
use crate::gate::{accumulate_low, gate_batch, low_entries, GateConfig, PseudoLabeledSet};
use crate::model::{ce_loss_grad, Gradient, LabeledSample, ModelParams};
use crate::report::{evaluate_domains, RunReport, StepRecord};
use crate::rng::Rng;
use crate::streams::{Benchmark, Oracle, SimulatedOracle, Stream, StreamSample};
use crate::theory::optimal_w0;

/// How the source-like loss weight `w0` is derived from `lambda0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum WeightMode {
    /// `w0 = lambda0`.
    MatchLambda,
    Fixed { w0: f64 },
    /// Bound-minimising `w0` for divergence `a` and constant `c1`, clamped to
    /// `[0, lambda0]`.
    ClosedForm { a: f64, c1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightPlan {
    pub lambda0: f64,
    pub w0: f64,
}

/// `lambda0 = |D_l| / (|D_l| + |D_h|)` and the matching `w0`. `vc_dim` is only
/// read by the closed-form mode.
pub fn compute_weight_plan(d_l_size: usize, d_h_size: usize, mode: &WeightMode, vc_dim: f64) -> Result<WeightPlan> {
    let n = d_l_size + d_h_size;
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let lambda0 = d_l_size as f64 / n as f64;
    let w0 = match *mode {
        WeightMode::MatchLambda => lambda0,
        WeightMode::Fixed { w0 } => {
            if !(0.0..=1.0).contains(&w0) {
                return Err(Error::InvalidWeight(format!("fixed w0 must lie in [0, 1], got {w0}")));
            }
            w0
        }
        WeightMode::ClosedForm { a, c1 } => optimal_w0(lambda0, a, n as f64, vc_dim, c1)?.w0().clamp(0.0, lambda0),
    };
    Ok(WeightPlan { lambda0, w0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub lr: f64,
    /// Stop after this many consecutive steps without a new best loss.
    pub tol_patience: usize,
    pub max_inner_steps: usize,
    pub batch_size: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self { lr: 0.1, tol_patience: 5, max_inner_steps: 100, batch_size: 32 }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be positive"));
        }
        if self.tol_patience == 0 || self.batch_size == 0 {
            return Err(Error::config("tol_patience and batch_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub params: ModelParams,
    pub steps: usize,
    /// Combined mini-batch loss of the first and last step.
    pub first_loss: f64,
    pub last_loss: f64,
}

/// Cycles through a set in shuffled epochs.
struct EpochSampler<'a> {
    data: &'a [LabeledSample],
    order: Vec<usize>,
    pos: usize,
}

impl<'a> EpochSampler<'a> {
    fn new(data: &'a [LabeledSample]) -> Self {
        Self { data, order: Vec::new(), pos: 0 }
    }

    fn next_batch(&mut self, size: usize, rng: &mut Rng) -> Vec<LabeledSample> {
        let size = size.min(self.data.len());
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order = rng.permutation(self.data.len());
                self.pos = 0;
            }
            out.push(self.data[self.order[self.pos]].clone());
            self.pos += 1;
        }
        out
    }
}

/// Fine-tunes on `w0 * CE(D_l) + (1 - w0) * CE(D_h)` with paired mini-batches.
/// An empty set drops its term and the other gets weight 1.
pub fn balanced_finetune(
    theta: &ModelParams,
    d_l: &[LabeledSample],
    d_h: &[LabeledSample],
    plan: &WeightPlan,
    cfg: &FinetuneConfig,
    rng: &mut Rng,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if d_l.is_empty() && d_h.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let w0 = match (d_l.is_empty(), d_h.is_empty()) {
        (true, _) => 0.0,
        (_, true) => 1.0,
        _ => plan.w0,
    };
    if !(0.0..=1.0).contains(&w0) {
        return Err(Error::InvalidWeight(format!("w0 must lie in [0, 1], got {w0}")));
    }
    let mut params = theta.clone();
    let (mut sl, mut sh) = (EpochSampler::new(d_l), EpochSampler::new(d_h));
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let (mut first_loss, mut last_loss) = (f64::NAN, f64::NAN);
    let mut steps = 0;
    while steps < cfg.max_inner_steps {
        let mut grad = Gradient::zeros(params.shape());
        let mut loss = 0.0;
        for (coef, sampler) in [(w0, &mut sl), (1.0 - w0, &mut sh)] {
            if coef == 0.0 || sampler.data.is_empty() {
                continue;
            }
            let batch = sampler.next_batch(cfg.batch_size, rng);
            let (l, g) = ce_loss_grad(&params, &batch, &vec![1.0; batch.len()])?;
            loss += coef * l;
            grad.add_scaled(&g, coef);
        }
        if steps == 0 {
            first_loss = loss;
        }
        last_loss = loss;
        if loss < best {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.tol_patience {
                break;
            }
        }
        crate::model::sgd_step_in_place(&mut params, &grad, cfg.lr);
        steps += 1;
    }
    Ok(FinetuneOutcome { params, steps, first_loss, last_loss })
}

/// Schedule for the cluster count `NC(t)`.
pub trait UpdateCentroidNum {
    fn next(&self, nc: usize, t: usize) -> usize;
}

/// `NC(t + 1) = NC(t) + k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NaiveIncrease(pub usize);

impl UpdateCentroidNum for NaiveIncrease {
    fn next(&self, nc: usize, _t: usize) -> usize {
        nc + self.0
    }
}

/// Feature space used for clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterSpace {
    /// Penultimate activations of the current model (raw input when linear).
    Penultimate,
    /// Penultimate activations standardised with the model's input statistics.
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub gate: GateConfig,
    pub budget: usize,
    pub nc_init: usize,
    pub k_increase: usize,
    pub finetune: FinetuneConfig,
    pub weight_mode: WeightMode,
    /// Optional reservoir cap on the pseudo-labeled set.
    pub d_l_cap: Option<usize>,
    pub ic: IcConfig,
    pub cluster_space: ClusterSpace,
    /// VC-dimension surrogate for the closed-form weight; defaults to the
    /// model's parameter count.
    pub vc_dim: Option<f64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            gate: GateConfig::default(),
            budget: 300,
            nc_init: 10,
            k_increase: 5,
            finetune: FinetuneConfig::default(),
            weight_mode: WeightMode::MatchLambda,
            d_l_cap: None,
            ic: IcConfig::default(),
            cluster_space: ClusterSpace::Penultimate,
            vc_dim: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.gate.validate()?;
        self.finetune.validate()?;
        if self.nc_init == 0 {
            return Err(Error::config("nc_init must be at least 1"));
        }
        if let WeightMode::Fixed { w0 } = self.weight_mode {
            if !(0.0..=1.0).contains(&w0) {
                return Err(Error::config(format!("fixed w0 must lie in [0, 1], got {w0}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub theta: ModelParams,
    pub d_l: PseudoLabeledSet,
    pub anchors: AnchorSet,
    pub nc: usize,
    /// Index of the next step.
    pub t: usize,
    /// New samples lost to budget-clipped clusters, summed over the run.
    pub dropped_samples: usize,
}

impl EngineState {
    /// `theta(0) = phi`.
    pub fn new(phi: &ModelParams, cfg: &EngineConfig) -> Self {
        Self {
            theta: phi.clone(),
            d_l: PseudoLabeledSet::new(),
            anchors: AnchorSet::new(),
            nc: cfg.nc_init,
            t: 0,
            dropped_samples: 0,
        }
    }

    pub fn budget_used(&self) -> usize {
        self.anchors.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub t: usize,
    pub low: usize,
    pub high: usize,
    pub new_anchors: usize,
    pub dropped_samples: usize,
    /// Cluster count used by this step.
    pub nc: usize,
    pub budget_used: usize,
    /// True when the budget was already exhausted and selection was skipped.
    pub selection_skipped: bool,
    pub d_l_size: usize,
    pub lambda0: f64,
    pub w0: f64,
    pub inner_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Predictions of the pre-update model.
    pub predictions: Vec<usize>,
    pub metrics: StepMetrics,
}

pub fn atta_step<O: Oracle + ?Sized>(
    state: &mut EngineState,
    batch: &[StreamSample],
    phi: &ModelParams,
    oracle: &mut O,
    cfg: &EngineConfig,
    rng: &Rng,
) -> Result<StepOutput> {
    atta_step_with(state, batch, phi, oracle, cfg, rng, &NaiveIncrease(cfg.k_increase))
}

/// One adaptation step. All randomness comes from children of `rng`, so the
/// step is reproducible from `(state, batch, rng)` alone.
pub fn atta_step_with<O: Oracle + ?Sized>(
    state: &mut EngineState,
    batch: &[StreamSample],
    phi: &ModelParams,
    oracle: &mut O,
    cfg: &EngineConfig,
    rng: &Rng,
    schedule: &dyn UpdateCentroidNum,
) -> Result<StepOutput> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let t = state.t;
    let predictions = batch.iter().map(|s| state.theta.predict(&s.features)).collect::<Result<Vec<_>>>()?;

    let split = gate_batch(batch, phi, &state.theta, &cfg.gate)?;
    let new_low = low_entries(batch, &split, t);
    let low = new_low.len();
    state.d_l = accumulate_low(std::mem::take(&mut state.d_l), new_low, cfg.d_l_cap, &mut rng.derive(1));

    let u_h: Vec<StreamSample> = split.high.iter().map(|&i| batch[i].clone()).collect();
    let remaining = cfg.budget.saturating_sub(state.anchors.len());
    let selection_skipped = remaining == 0 && !u_h.is_empty();
    let (mut new_anchors, mut dropped) = (0, 0);
    if !u_h.is_empty() && remaining > 0 {
        let theta = &state.theta;
        let features = |x: &[f64]| -> Result<Vec<f64>> {
            match cfg.cluster_space {
                ClusterSpace::Penultimate => theta.penultimate(x),
                ClusterSpace::Normalized => match (theta.shape().hidden, theta.norm()) {
                    (None, Some(n)) => Ok(n.apply(x)),
                    _ => theta.penultimate(x),
                },
            }
        };
        let plan = ic_plan(&state.anchors, &u_h, state.nc, features, &cfg.ic, &mut rng.derive(2))?;
        let accepted = anchor_budget_guard(&plan.proposals, remaining);
        let outcome = ic_commit(&mut state.anchors, &plan, &accepted, &u_h, oracle, t)?;
        new_anchors = outcome.new_anchors;
        dropped = outcome.dropped_samples;
        state.dropped_samples += dropped;
    }
    if selection_skipped {
        log::info!("step {t}: budget exhausted, selection skipped");
    }
    if state.anchors.len() > cfg.budget {
        return Err(Error::Invariant(format!("{} anchors exceed budget {}", state.anchors.len(), cfg.budget)));
    }

    let (mut lambda0, mut w0, mut inner_steps) = (f64::NAN, f64::NAN, 0);
    if !state.d_l.is_empty() || !state.anchors.is_empty() {
        let vc_dim = cfg.vc_dim.unwrap_or(state.theta.shape().param_count() as f64);
        let plan = compute_weight_plan(state.d_l.len(), state.anchors.len(), &cfg.weight_mode, vc_dim)?;
        let out = balanced_finetune(
            &state.theta,
            &state.d_l.to_samples(),
            &state.anchors.labeled_samples(),
            &plan,
            &cfg.finetune,
            &mut rng.derive(3),
        )?;
        state.theta = out.params;
        lambda0 = plan.lambda0;
        w0 = plan.w0;
        inner_steps = out.steps;
    }

    let nc = state.nc;
    state.nc = schedule.next(state.nc, t);
    state.t += 1;
    Ok(StepOutput {
        predictions,
        metrics: StepMetrics {
            t,
            low,
            high: split.high.len(),
            new_anchors,
            dropped_samples: dropped,
            nc,
            budget_used: state.anchors.len(),
            selection_skipped,
            d_l_size: state.d_l.len(),
            lambda0,
            w0,
            inner_steps,
        },
    })
}

/// Serialisable mid-stream snapshot. Resuming with the same phi, benchmark,
/// stream and config reproduces the uninterrupted run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub seed: u64,
    pub state: EngineState,
    pub oracle_queries: usize,
    pub records: Vec<StepRecord>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Drives the engine over a stream while an evaluator scores predictions
/// against ground truth the learner never sees.
pub struct StreamRunner<'a> {
    phi: &'a ModelParams,
    bench: &'a Benchmark,
    stream: &'a Stream,
    cfg: &'a EngineConfig,
    seed: u64,
    state: EngineState,
    oracle: SimulatedOracle,
    records: Vec<StepRecord>,
}

impl<'a> StreamRunner<'a> {
    pub fn new(phi: &'a ModelParams, bench: &'a Benchmark, stream: &'a Stream, cfg: &'a EngineConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            phi,
            bench,
            stream,
            cfg,
            seed,
            state: EngineState::new(phi, cfg),
            oracle: bench.oracle(),
            records: Vec::new(),
        })
    }

    pub fn resume(
        phi: &'a ModelParams,
        bench: &'a Benchmark,
        stream: &'a Stream,
        cfg: &'a EngineConfig,
        checkpoint: Checkpoint,
    ) -> Result<Self> {
        cfg.validate()?;
        if checkpoint.state.t > stream.len() || checkpoint.records.len() != checkpoint.state.t {
            return Err(Error::config("checkpoint does not match this stream"));
        }
        let mut oracle = bench.oracle();
        oracle.set_queries(checkpoint.oracle_queries);
        Ok(Self {
            phi,
            bench,
            stream,
            cfg,
            seed: checkpoint.seed,
            state: checkpoint.state,
            oracle,
            records: checkpoint.records,
        })
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.t >= self.stream.len()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            seed: self.seed,
            state: self.state.clone(),
            oracle_queries: self.oracle.queries(),
            records: self.records.clone(),
        }
    }

    /// Runs one step; returns `false` once the stream is exhausted.
    pub fn step(&mut self) -> Result<bool> {
        let Some(batch) = self.stream.batches.get(self.state.t) else {
            return Ok(false);
        };
        let rng = Rng::new(self.seed).derive(self.state.t as u64);
        let out = atta_step(&mut self.state, &batch.samples, self.phi, &mut self.oracle, self.cfg, &rng)?;
        let mut correct = 0;
        for (s, &p) in batch.samples.iter().zip(&out.predictions) {
            if self.bench.target_label(s.index)? == p {
                correct += 1;
            }
        }
        let m = out.metrics;
        self.records.push(StepRecord {
            t: m.t,
            segment: batch.segment,
            batch_size: batch.samples.len(),
            correct,
            realtime_accuracy: correct as f64 / batch.samples.len() as f64,
            budget_used: m.budget_used,
            nc: m.nc,
            lambda0: m.lambda0,
            w0: m.w0,
            inner_steps: m.inner_steps,
            low: m.low,
            high: m.high,
            new_anchors: m.new_anchors,
        });
        Ok(true)
    }

    pub fn run_until(&mut self, t_end: usize) -> Result<()> {
        while self.state.t < t_end && self.step()? {}
        Ok(())
    }

    pub fn finish(mut self, method: &str) -> Result<RunReport> {
        let started = Instant::now();
        while self.step()? {}
        if self.oracle.queries() != self.state.anchors.len() {
            return Err(Error::Invariant(format!(
                "oracle answered {} queries for {} anchors",
                self.oracle.queries(),
                self.state.anchors.len()
            )));
        }
        let pre = evaluate_domains(self.phi, self.bench)?;
        let post = evaluate_domains(&self.state.theta, self.bench)?;
        let mut report = RunReport::new(method, self.stream, self.seed, self.records, pre, post);
        report.budget_used = self.state.anchors.len();
        report.oracle_queries = self.oracle.queries();
        report.wall_time_secs = started.elapsed().as_secs_f64();
        Ok(report)
    }

    pub fn into_state(self) -> EngineState {
        self.state
    }
}

/// Runs the full stream from `theta(0) = phi`.
pub fn run_stream(phi: &ModelParams, bench: &Benchmark, stream: &Stream, cfg: &EngineConfig, seed: u64) -> Result<RunReport> {
    StreamRunner::new(phi, bench, stream, cfg, seed)?.finish("simatta")
}
