//! Entropy gating of incoming batches.
//!
//! Low-entropy samples are scored with the frozen source model and pseudo-labeled
//! by it; high-entropy samples are scored with the *adapting* model and become
//! candidates for oracle labeling. The two tests use different models, so a
//! sample can land in both sets, in neither, or in one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LabeledSample, ModelParams};
use crate::rng::Rng;
use crate::streams::StreamSample;

/// Entropy thresholds in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub e_l: f64,
    pub e_h: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { e_l: 1e-3, e_h: 1e-2 }
    }
}

impl GateConfig {
    pub fn new(e_l: f64, e_h: f64) -> Result<Self> {
        let cfg = Self { e_l, e_h };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        // e_h may be +inf (never select anything for labeling).
        if !(self.e_l >= 0.0 && self.e_l.is_finite() && self.e_h >= self.e_l) {
            return Err(Error::config(format!(
                "entropy thresholds must satisfy 0 <= e_l <= e_h (got e_l={}, e_h={})",
                self.e_l, self.e_h
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    /// Position in the gated batch.
    pub position: usize,
    pub label: usize,
    pub entropy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GateSplit {
    pub low: Vec<PseudoLabel>,
    /// Positions of high-entropy samples in the gated batch.
    pub high: Vec<usize>,
}

pub fn gate_batch<X: AsRef<[f64]>>(
    batch: &[X],
    phi: &ModelParams,
    theta: &ModelParams,
    cfg: &GateConfig,
) -> Result<GateSplit> {
    cfg.validate()?;
    let mut split = GateSplit::default();
    for (position, x) in batch.iter().enumerate() {
        let x = x.as_ref();
        let p_src = phi.predict_proba(x)?;
        let h_src = p_src.entropy();
        if h_src < cfg.e_l {
            split.low.push(PseudoLabel { position, label: p_src.argmax(), entropy: h_src });
        }
        if theta.predict_proba(x)?.entropy() > cfg.e_h {
            split.high.push(position);
        }
    }
    Ok(split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabeledEntry {
    pub sample: LabeledSample,
    /// Stream index of the sample.
    pub index: usize,
    /// Time step at which it was gated in.
    pub step: usize,
}

/// Accumulated pseudo-labeled, source-like samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabeledSet {
    entries: Vec<PseudoLabeledEntry>,
    /// Number of entries ever offered; drives reservoir sampling under a cap.
    seen: usize,
}

impl PseudoLabeledSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn seen(&self) -> usize {
        self.seen
    }

    pub fn entries(&self) -> &[PseudoLabeledEntry] {
        &self.entries
    }

    pub fn samples(&self) -> impl Iterator<Item = &LabeledSample> {
        self.entries.iter().map(|e| &e.sample)
    }

    pub fn to_samples(&self) -> Vec<LabeledSample> {
        self.samples().cloned().collect()
    }
}

/// Collects the low-entropy part of a gate split as pseudo-labeled entries.
pub fn low_entries(batch: &[StreamSample], split: &GateSplit, step: usize) -> Vec<PseudoLabeledEntry> {
    split
        .low
        .iter()
        .map(|p| PseudoLabeledEntry {
            sample: LabeledSample::new(batch[p.position].features.clone(), p.label),
            index: batch[p.position].index,
            step,
        })
        .collect()
}

/// `prev ∪ new_low`. With a cap, keeps a uniform sample (reservoir sampling
/// over everything ever offered) of at most `cap` entries.
pub fn accumulate_low(
    mut prev: PseudoLabeledSet,
    new_low: Vec<PseudoLabeledEntry>,
    cap: Option<usize>,
    rng: &mut Rng,
) -> PseudoLabeledSet {
    match cap {
        None => {
            prev.seen += new_low.len();
            prev.entries.extend(new_low);
        }
        Some(cap) => {
            // A set built without a cap may already exceed it.
            if prev.entries.len() > cap {
                let mut keep = rng.permutation(prev.entries.len());
                keep.truncate(cap);
                keep.sort_unstable();
                let old = std::mem::take(&mut prev.entries);
                let mut old: Vec<Option<PseudoLabeledEntry>> = old.into_iter().map(Some).collect();
                prev.entries = keep.into_iter().map(|i| old[i].take().expect("distinct")).collect();
            }
            for entry in new_low {
                prev.seen += 1;
                if prev.entries.len() < cap {
                    prev.entries.push(entry);
                } else {
                    let j = rng.below(prev.seen);
                    if j < cap {
                        prev.entries[j] = entry;
                    }
                }
            }
        }
    }
    prev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Shape;

    fn biased(b: &[f64]) -> ModelParams {
        let mut m = ModelParams::zeros(Shape::linear(1, b.len())).unwrap();
        m.out_bias_mut().copy_from_slice(b);
        m
    }

    /// Two-class model whose logit gap equals the input: z = (x, 0).
    fn ramp() -> ModelParams {
        let mut m = ModelParams::zeros(Shape::linear(1, 2)).unwrap();
        m.set_out_weight(0, 0, 1.0);
        m
    }

    fn entries(n: usize) -> Vec<PseudoLabeledEntry> {
        (0..n)
            .map(|i| PseudoLabeledEntry { sample: LabeledSample::new(vec![i as f64], 0), index: i, step: 0 })
            .collect()
    }

    #[test]
    fn confident_source_pseudo_labels_everything() {
        let phi = biased(&[0.0, 900.0, 0.0]);
        let batch: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let split = gate_batch(&batch, &phi, &phi, &GateConfig::new(0.1, 0.2).unwrap()).unwrap();
        assert_eq!(split.low.len(), 5);
        assert!(split.low.iter().all(|p| p.label == 1));
        assert!(split.high.is_empty());
    }

    #[test]
    fn uniform_models_send_everything_high() {
        let zero = ModelParams::zeros(Shape::linear(1, 4)).unwrap();
        let batch: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let cfg = GateConfig::new(1e-3, 4f64.ln() - 0.01).unwrap();
        let split = gate_batch(&batch, &zero, &zero, &cfg).unwrap();
        assert!(split.low.is_empty());
        assert_eq!(split.high, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn mixed_batch_exact_partition() {
        // Binary entropies of sigmoid(x) computed independently:
        // x=0 -> 0.693147, x=2 -> 0.365334, x=5 -> 0.040180, x=9 -> 0.001234, x=12 -> 0.0000799
        let m = ramp();
        let batch = vec![vec![0.0], vec![2.0], vec![5.0], vec![9.0], vec![12.0], vec![-12.0]];
        let cfg = GateConfig::new(0.01, 0.05).unwrap();
        let split = gate_batch(&batch, &m, &m, &cfg).unwrap();
        let low: Vec<(usize, usize)> = split.low.iter().map(|p| (p.position, p.label)).collect();
        assert_eq!(low, vec![(3, 0), (4, 0), (5, 1)]);
        assert_eq!(split.high, vec![0, 1]);
    }

    #[test]
    fn low_uses_phi_and_high_uses_theta() {
        let phi = biased(&[50.0, 0.0]);
        let theta = biased(&[0.0, 0.0]);
        let split = gate_batch(&[vec![0.0]], &phi, &theta, &GateConfig::default()).unwrap();
        assert_eq!(split.low.len(), 1);
        assert_eq!(split.high, vec![0]);
    }

    #[test]
    fn invalid_thresholds() {
        assert!(GateConfig::new(0.2, 0.1).is_err());
        assert!(GateConfig::new(-1.0, 0.1).is_err());
        assert!(GateConfig::new(0.0, f64::INFINITY).is_ok());
    }

    #[test]
    fn accumulate_uncapped_is_union() {
        let mut rng = Rng::new(0);
        let s = accumulate_low(PseudoLabeledSet::new(), entries(4), None, &mut rng);
        assert_eq!(s.len(), 4);
        let s2 = accumulate_low(s.clone(), vec![], Some(4), &mut rng);
        assert_eq!(s2, s);
    }

    #[test]
    fn reservoir_cap_is_uniform() {
        // Each of 25 offered entries should survive with probability 10/25.
        let runs = 4000;
        let mut counts = [0usize; 25];
        for seed in 0..runs {
            let mut rng = Rng::new(seed);
            let all = entries(25);
            let first = accumulate_low(PseudoLabeledSet::new(), all[..12].to_vec(), Some(10), &mut rng);
            let s = accumulate_low(first, all[12..].to_vec(), Some(10), &mut rng);
            assert_eq!(s.len(), 10);
            for e in s.entries() {
                counts[e.index] += 1;
            }
        }
        let p = 10.0 / 25.0;
        let mean = runs as f64 * p;
        let sigma = (runs as f64 * p * (1.0 - p)).sqrt();
        // Bonferroni over 25 entries: two-sided 6e-5 each at Z = 4.
        const Z: f64 = 4.0;
        for (i, &c) in counts.iter().enumerate() {
            assert!((c as f64 - mean).abs() <= Z * sigma, "entry {i}: {c} vs {mean}±{sigma}");
        }
    }
}
