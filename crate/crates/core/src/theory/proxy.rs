//! Proxy domain divergence and ideal-joint-error estimates.
//!
//! A linear two-class discriminator is trained to tell the samples of `s1`
//! from those of `s2`; its held-out error `err` gives `d_hat = 2 (1 - 2 err)`.
//! Both sides carry equal total weight in training and `err` is the mean of
//! the two per-side error rates, so unequal set sizes do not inflate `d_hat`.
//! The train/test split is decided by hashing each sample's content, so an
//! identical pair of sets puts every point in the same half with both labels,
//! and swapping the arguments only swaps the label names.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{accuracy, ce_loss_grad, sgd_step_in_place, InputNorm, LabeledSample, ModelParams, Shape};
use crate::rng::{mix64, Rng};

pub const MIN_PROXY_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub steps: usize,
    pub lr: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { steps: 300, lr: 0.5 }
    }
}

fn content_hash(x: &[f64], seed: u64) -> u64 {
    x.iter().fold(mix64(seed), |h, v| mix64(h ^ v.to_bits()))
}

/// Full-batch gradient descent from zero on standardised inputs.
pub(crate) fn train_full_batch(
    data: &[LabeledSample],
    classes: usize,
    cfg: &DiscriminatorConfig,
) -> Result<ModelParams> {
    train_weighted(data, &vec![1.0; data.len()], classes, cfg)
}

fn train_weighted(
    data: &[LabeledSample],
    weights: &[f64],
    classes: usize,
    cfg: &DiscriminatorConfig,
) -> Result<ModelParams> {
    let dim = data.first().ok_or(Error::EmptyBatch)?.features.len();
    let mut model = ModelParams::zeros(Shape::linear(dim, classes))?;
    model.set_norm(Some(InputNorm::fit(data.iter().map(|s| s.features.as_slice()), dim)?))?;
    for _ in 0..cfg.steps {
        let (_, g) = ce_loss_grad(&model, data, weights)?;
        sgd_step_in_place(&mut model, &g, cfg.lr);
    }
    Ok(model)
}

/// Proxy divergence `d_hat in [0, 2]` between two samples.
pub fn proxy_h_delta_h(s1: &[Vec<f64>], s2: &[Vec<f64>], rng: &mut Rng) -> Result<f64> {
    proxy_h_delta_h_with(s1, s2, &DiscriminatorConfig::default(), rng)
}

pub fn proxy_h_delta_h_with(s1: &[Vec<f64>], s2: &[Vec<f64>], cfg: &DiscriminatorConfig, rng: &mut Rng) -> Result<f64> {
    for s in [s1, s2] {
        if s.len() < MIN_PROXY_SAMPLES {
            return Err(Error::InsufficientSamples { need: MIN_PROXY_SAMPLES, got: s.len() });
        }
    }
    let seed = rng.next_u64();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (label, set) in [(0usize, s1), (1, s2)] {
        for x in set {
            let s = LabeledSample::new(x.clone(), label);
            if content_hash(x, seed) & 1 == 0 {
                train.push(s);
            } else {
                test.push(s);
            }
        }
    }
    let count = |set: &[LabeledSample], label: usize| set.iter().filter(|s| s.label == label).count();
    let train_counts = [count(&train, 0), count(&train, 1)];
    let test_counts = [count(&test, 0), count(&test, 1)];
    if train_counts.contains(&0) || test_counts.contains(&0) {
        let got = train_counts.into_iter().chain(test_counts).min().unwrap_or(0);
        return Err(Error::InsufficientSamples { need: 1, got });
    }
    // Each side sums to half the total weight.
    let weights: Vec<f64> =
        train.iter().map(|s| train.len() as f64 / (2.0 * train_counts[s.label] as f64)).collect();
    let disc = train_weighted(&train, &weights, 2, cfg)?;
    let mut wrong = [0usize; 2];
    for s in &test {
        if disc.predict(&s.features)? != s.label {
            wrong[s.label] += 1;
        }
    }
    let err = 0.5 * (wrong[0] as f64 / test_counts[0] as f64 + wrong[1] as f64 / test_counts[1] as f64);
    Ok((2.0 * (1.0 - 2.0 * err)).clamp(0.0, 2.0))
}

/// Ideal joint error estimate: train one classifier on the union of two
/// labeled domains and add its errors on each.
pub fn estimate_gamma(d_i: &[LabeledSample], d_j: &[LabeledSample], classes: usize, cfg: &DiscriminatorConfig) -> Result<f64> {
    if d_i.is_empty() || d_j.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let union: Vec<LabeledSample> = d_i.iter().chain(d_j).cloned().collect();
    let h = train_full_batch(&union, classes, cfg)?;
    Ok((1.0 - accuracy(&h, d_i)?) + (1.0 - accuracy(&h, d_j)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(n: usize, center: f64, dim: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..dim).map(|_| center + rng.normal()).collect()).collect()
    }

    #[test]
    fn identical_sets_give_zero() {
        let a = gaussian(100, 0.0, 3, &mut Rng::new(1));
        for seed in 0..3 {
            assert_eq!(proxy_h_delta_h(&a, &a, &mut Rng::new(seed)).unwrap(), 0.0);
        }
    }

    #[test]
    fn separated_sets_give_two() {
        let mut rng = Rng::new(2);
        let a = gaussian(200, 0.0, 3, &mut rng);
        let b = gaussian(200, 10.0, 3, &mut rng);
        let d = proxy_h_delta_h(&a, &b, &mut Rng::new(0)).unwrap();
        assert!(d >= 1.9, "{d}");
    }

    #[test]
    fn argument_order_does_not_matter() {
        let mut rng = Rng::new(3);
        let a = gaussian(150, 0.0, 4, &mut rng);
        let b = gaussian(150, 0.7, 4, &mut rng);
        let ab = proxy_h_delta_h(&a, &b, &mut Rng::new(9)).unwrap();
        let ba = proxy_h_delta_h(&b, &a, &mut Rng::new(9)).unwrap();
        assert!((ab - ba).abs() < 1e-9, "{ab} vs {ba}");
    }

    #[test]
    fn unequal_sizes_from_one_distribution_stay_near_zero() {
        let mut rng = Rng::new(5);
        let a = gaussian(800, 0.0, 4, &mut rng);
        let b = gaussian(100, 0.0, 4, &mut rng);
        let d = proxy_h_delta_h(&a, &b, &mut Rng::new(0)).unwrap();
        assert!(d <= 0.3, "{d}");
    }

    #[test]
    fn too_few_samples() {
        let a = gaussian(10, 0.0, 2, &mut Rng::new(0));
        let b = gaussian(50, 0.0, 2, &mut Rng::new(1));
        assert!(matches!(proxy_h_delta_h(&a, &b, &mut Rng::new(0)), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn gamma_is_small_for_compatible_domains() {
        let mut rng = Rng::new(4);
        let mk = |shift: f64, rng: &mut Rng| -> Vec<LabeledSample> {
            (0..200)
                .map(|i| {
                    let y = i % 2;
                    let c = if y == 0 { -3.0 } else { 3.0 };
                    LabeledSample::new(vec![c + rng.normal(), shift + rng.normal()], y)
                })
                .collect()
        };
        let (a, b) = (mk(0.0, &mut rng), mk(2.0, &mut rng));
        let g = estimate_gamma(&a, &b, 2, &DiscriminatorConfig::default()).unwrap();
        assert!(g < 0.05, "{g}");
    }
}
