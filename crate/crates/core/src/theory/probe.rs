//! Low- versus high-entropy selections from the pooled target set.
//!
//! Samples are ranked by prediction entropy under the source model; the
//! lowest and highest slices are labeled, the source model is fine-tuned on
//! each slice alone, and both results are scored on source and target test
//! data.

use serde::{Deserialize, Serialize};

use crate::engine::{balanced_finetune, FinetuneConfig, WeightPlan};
use crate::error::{Error, Result};
use crate::model::{accuracy, mean_ce, LabeledSample, ModelParams};
use crate::rng::Rng;
use crate::streams::{Benchmark, Oracle};

/// Where the probe's labels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeLabels {
    Oracle,
    /// The source model's own argmax.
    Pseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub n_low: usize,
    pub n_high: usize,
    pub labels: ProbeLabels,
    pub finetune: FinetuneConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { n_low: 300, n_high: 300, labels: ProbeLabels::Oracle, finetune: FinetuneConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeArm {
    /// Pooled target indices in selection order.
    pub indices: Vec<usize>,
    pub mean_entropy: f64,
    pub source_loss: f64,
    pub target_loss: f64,
    pub source_accuracy: f64,
    pub target_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub low: ProbeArm,
    pub high: ProbeArm,
    pub oracle_queries: usize,
}

/// Each slice may cover the whole pool; the two slices may overlap.
pub fn entropy_probe(phi: &ModelParams, bench: &Benchmark, cfg: &ProbeConfig, rng: &Rng) -> Result<ProbeReport> {
    cfg.finetune.validate()?;
    let pool = bench.target_pool_unlabeled();
    let need = cfg.n_low.max(cfg.n_high);
    if need == 0 || need > pool.len() {
        return Err(Error::InsufficientSamples { need: need.max(1), got: pool.len() });
    }
    let mut scored = Vec::with_capacity(pool.len());
    for s in &pool {
        let p = phi.predict_proba(&s.features)?;
        scored.push((p.entropy(), s.index, p.argmax()));
    }
    // Ascending entropy, ties by index.
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let low: Vec<_> = scored[..cfg.n_low].to_vec();
    let mut high = scored.clone();
    high.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    high.truncate(cfg.n_high);

    let mut oracle = bench.oracle();
    let source_test = &bench.source().test;
    let target_test: Vec<LabeledSample> = bench.targets().iter().flat_map(|d| d.test.iter().cloned()).collect();
    // Arms are trained in index order so equal selections give equal models.
    let mut arm = |sel: &[(f64, usize, usize)]| -> Result<ProbeArm> {
        let mut by_index = sel.to_vec();
        by_index.sort_by_key(|s| s.1);
        let mut data = Vec::with_capacity(sel.len());
        for &(_, index, pseudo) in &by_index {
            let label = match cfg.labels {
                ProbeLabels::Oracle => oracle.label(index)?,
                ProbeLabels::Pseudo => pseudo,
            };
            data.push(LabeledSample::new(pool[index].features.clone(), label));
        }
        let plan = WeightPlan { lambda0: 1.0, w0: 1.0 };
        let model = balanced_finetune(phi, &data, &[], &plan, &cfg.finetune, &mut rng.derive(1))?.params;
        Ok(ProbeArm {
            indices: sel.iter().map(|s| s.1).collect(),
            mean_entropy: by_index.iter().map(|s| s.0).sum::<f64>() / sel.len().max(1) as f64,
            source_loss: mean_ce(&model, source_test)?,
            target_loss: mean_ce(&model, &target_test)?,
            source_accuracy: accuracy(&model, source_test)?,
            target_accuracy: accuracy(&model, &target_test)?,
        })
    };
    let low = arm(&low)?;
    let high = arm(&high)?;
    Ok(ProbeReport { low, high, oracle_queries: oracle.queries() })
}
