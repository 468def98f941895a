//! Softmax classifier kernel: forward pass, entropy, weighted cross-entropy with
//! its exact gradient, and plain SGD.
//!
//! The classifier is affine-softmax over an optional `tanh` hidden layer.
//! All trainable parameters live in one flat `Vec<f64>` so that gradients,
//! SGD steps and finite-difference checks are simple vector arithmetic.
//! Layout (row-major):
//!
//! ```text
//! [ hidden_w (h x d) | hidden_b (h) | out_w (p x C) | out_b (C) ]
//! ```
//!
//! where `p` is the penultimate width (`h` with a hidden layer, `d` without).
//! An optional [`InputNorm`] standardises inputs before the first layer. It is
//! a non-trainable buffer, the analog of frozen batch-norm statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Probabilities below this are clamped before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub input_dim: usize,
    pub hidden: Option<usize>,
    pub classes: usize,
}

impl Shape {
    pub fn linear(input_dim: usize, classes: usize) -> Self {
        Self { input_dim, hidden: None, classes }
    }

    pub fn penultimate_dim(&self) -> usize {
        self.hidden.unwrap_or(self.input_dim)
    }

    pub fn param_count(&self) -> usize {
        let h = self.hidden.map_or(0, |h| h * self.input_dim + h);
        h + self.penultimate_dim() * self.classes + self.classes
    }

    fn hidden_w(&self) -> std::ops::Range<usize> {
        let h = self.hidden.unwrap_or(0);
        0..h * self.input_dim
    }

    fn hidden_b(&self) -> std::ops::Range<usize> {
        let start = self.hidden_w().end;
        start..start + self.hidden.unwrap_or(0)
    }

    fn out_w(&self) -> std::ops::Range<usize> {
        let start = self.hidden_b().end;
        start..start + self.penultimate_dim() * self.classes
    }

    fn out_b(&self) -> std::ops::Range<usize> {
        let start = self.out_w().end;
        start..start + self.classes
    }
}

/// Per-feature standardisation `(x - mean) / std` applied before the first layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InputNorm {
    /// Mean and (population) standard deviation of `rows`. Near-constant
    /// features get `std = 1` so they pass through unscaled.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        if rows.len() < 2 {
            return Err(Error::InsufficientSamples { need: 2, got: rows.len() });
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            check_dim(dim, r.len())?;
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

/// Classifier parameters (`phi` for the frozen source model, `theta` for the
/// adapting copy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    shape: Shape,
    data: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm: Option<InputNorm>,
}

/// Gradient with the same flat layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub data: Vec<f64>,
}

impl Gradient {
    pub fn zeros(shape: &Shape) -> Self {
        Self { data: vec![0.0; shape.param_count()] }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|g| *g *= s);
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &Gradient, s: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest probability; ties go to the lowest class index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.0)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate().skip(1) {
        if p > v[best] {
            best = i;
        }
    }
    best
}

/// Shannon entropy in nats. Probabilities are clamped at [`LOG_CLAMP`] before
/// the log, so zero entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    let h: f64 = p.iter().map(|&pc| if pc > 0.0 { -pc * pc.max(LOG_CLAMP).ln() } else { 0.0 }).sum();
    h.max(0.0)
}

/// `-ln softmax(z)_y` computed from logit margins, accurate both where `p_y`
/// underflows and where it rounds to 1.
fn ce_from_logits(z: &[f64], y: usize) -> f64 {
    let m = z.iter().enumerate().filter(|&(k, _)| k != y).map(|(_, &v)| v - z[y]).fold(f64::NEG_INFINITY, f64::max);
    let rest = |shift: f64| -> f64 {
        z.iter().enumerate().filter(|&(k, _)| k != y).map(|(_, &v)| (v - z[y] - shift).exp()).sum()
    };
    if m > 0.0 {
        m + ((-m).exp() + rest(m)).ln()
    } else {
        rest(0.0).ln_1p()
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Intermediate values of one forward pass, kept for backprop.
struct Forward {
    input: Vec<f64>,
    hidden: Option<Vec<f64>>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(shape: Shape) -> Result<Self> {
        if shape.classes < 2 {
            return Err(Error::config("a classifier needs at least 2 classes"));
        }
        if shape.input_dim == 0 || shape.hidden == Some(0) {
            return Err(Error::config("layer widths must be positive"));
        }
        Ok(Self { data: vec![0.0; shape.param_count()], shape, norm: None })
    }

    /// Output layer starts at zero (uniform predictions); a hidden layer, if
    /// present, gets scaled Gaussian weights so that its units differ.
    pub fn init(shape: Shape, rng: &mut Rng) -> Result<Self> {
        let mut m = Self::zeros(shape)?;
        if shape.hidden.is_some() {
            let scale = 1.0 / (shape.input_dim as f64).sqrt();
            for w in &mut m.data[shape.hidden_w()] {
                *w = rng.normal() * scale;
            }
        }
        Ok(m)
    }

    pub fn from_parts(shape: Shape, data: Vec<f64>, norm: Option<InputNorm>) -> Result<Self> {
        let mut m = Self::zeros(shape)?;
        check_dim(shape.param_count(), data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("parameters must be finite"));
        }
        m.data = data;
        m.set_norm(norm)?;
        Ok(m)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn input_dim(&self) -> usize {
        self.shape.input_dim
    }

    pub fn classes(&self) -> usize {
        self.shape.classes
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn norm(&self) -> Option<&InputNorm> {
        self.norm.as_ref()
    }

    pub fn set_norm(&mut self, norm: Option<InputNorm>) -> Result<()> {
        if let Some(n) = &norm {
            check_dim(self.shape.input_dim, n.mean.len())?;
            check_dim(self.shape.input_dim, n.std.len())?;
        }
        self.norm = norm;
        Ok(())
    }

    /// Output weight connecting penultimate unit `i` to class `c`.
    pub fn out_weight(&self, i: usize, c: usize) -> f64 {
        self.data[self.shape.out_w().start + i * self.shape.classes + c]
    }

    pub fn set_out_weight(&mut self, i: usize, c: usize, v: f64) {
        let idx = self.shape.out_w().start + i * self.shape.classes + c;
        self.data[idx] = v;
    }

    pub fn out_bias(&self) -> &[f64] {
        &self.data[self.shape.out_b()]
    }

    pub fn out_bias_mut(&mut self) -> &mut [f64] {
        let r = self.shape.out_b();
        &mut self.data[r]
    }

    fn normalized(&self, x: &[f64]) -> Vec<f64> {
        match &self.norm {
            Some(n) => n.apply(x),
            None => x.to_vec(),
        }
    }

    fn hidden_activations(&self, input: &[f64]) -> Option<Vec<f64>> {
        let h = self.shape.hidden?;
        let d = self.shape.input_dim;
        let w = &self.data[self.shape.hidden_w()];
        let b = &self.data[self.shape.hidden_b()];
        Some(
            (0..h)
                .map(|j| {
                    let row = &w[j * d..(j + 1) * d];
                    (b[j] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>()).tanh()
                })
                .collect(),
        )
    }

    fn logits_from_penultimate(&self, pen: &[f64]) -> Vec<f64> {
        let c = self.shape.classes;
        let w = &self.data[self.shape.out_w()];
        let mut z = self.data[self.shape.out_b()].to_vec();
        for (i, &a) in pen.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &w[i * c..(i + 1) * c];
            for (zc, wc) in z.iter_mut().zip(row) {
                *zc += a * wc;
            }
        }
        z
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let input = self.normalized(x);
        let hidden = self.hidden_activations(&input);
        let logits = self.logits_from_penultimate(hidden.as_deref().unwrap_or(&input));
        let mut probs = logits.clone();
        softmax_in_place(&mut probs);
        Forward { input, hidden, logits, probs }
    }

    /// Features fed to the output layer: hidden activations when the model
    /// has a hidden layer, otherwise the raw input.
    pub fn penultimate(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.shape.input_dim, x.len())?;
        Ok(match self.shape.hidden {
            Some(_) => self.hidden_activations(&self.normalized(x)).expect("hidden layer"),
            None => x.to_vec(),
        })
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.shape.input_dim, x.len())?;
        let input = self.normalized(x);
        let hidden = self.hidden_activations(&input);
        Ok(self.logits_from_penultimate(hidden.as_deref().unwrap_or(&input)))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<ProbVector> {
        check_dim(self.shape.input_dim, x.len())?;
        Ok(ProbVector(self.forward(x).probs))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict_proba(x)?.argmax())
    }

    /// Like [`predict_proba`](Self::predict_proba) but standardising `x` with
    /// the supplied statistics instead of the stored ones.
    pub fn predict_proba_with_norm(&self, x: &[f64], norm: &InputNorm) -> Result<ProbVector> {
        check_dim(self.shape.input_dim, x.len())?;
        let input = norm.apply(x);
        let hidden = self.hidden_activations(&input);
        let mut p = self.logits_from_penultimate(hidden.as_deref().unwrap_or(&input));
        softmax_in_place(&mut p);
        Ok(ProbVector(p))
    }

    /// Backpropagates `dlogits` (already scaled) into `grad`.
    fn backward(&self, fwd: &Forward, dlogits: &[f64], grad: &mut [f64]) {
        let c = self.shape.classes;
        let pen = fwd.hidden.as_deref().unwrap_or(&fwd.input);
        let ow = self.shape.out_w();
        for (i, &a) in pen.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let g = &mut grad[ow.start + i * c..ow.start + (i + 1) * c];
            for (gc, dc) in g.iter_mut().zip(dlogits) {
                *gc += a * dc;
            }
        }
        for (gb, dc) in grad[self.shape.out_b()].iter_mut().zip(dlogits) {
            *gb += dc;
        }
        if let (Some(h), Some(act)) = (self.shape.hidden, fwd.hidden.as_ref()) {
            let d = self.shape.input_dim;
            let w = &self.data[ow.clone()];
            let hw = self.shape.hidden_w().start;
            let hb = self.shape.hidden_b().start;
            for j in 0..h {
                let row = &w[j * c..(j + 1) * c];
                let da: f64 = row.iter().zip(dlogits).map(|(wc, dc)| wc * dc).sum();
                let dz = da * (1.0 - act[j] * act[j]);
                if dz == 0.0 {
                    continue;
                }
                grad[hb + j] += dz;
                for (g, x) in grad[hw + j * d..hw + (j + 1) * d].iter_mut().zip(&fwd.input) {
                    *g += dz * x;
                }
            }
        }
    }

    /// Adds `scale * d CE(x, y) / d params` to `grad` and returns the unscaled
    /// cross-entropy of the sample.
    pub(crate) fn accumulate_ce(&self, x: &[f64], y: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let fwd = self.forward(x);
        let loss = ce_from_logits(&fwd.logits, y);
        if scale != 0.0 {
            let mut d = fwd.probs.clone();
            d[y] -= 1.0;
            d.iter_mut().for_each(|v| *v *= scale);
            self.backward(&fwd, &d, grad);
        }
        loss
    }

    /// Adds `scale * d H(f(x)) / d params` to `grad`; returns the entropy.
    pub(crate) fn accumulate_entropy(&self, x: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let fwd = self.forward(x);
        let h = entropy(&fwd.probs);
        // dH/dz_k = -p_k (ln p_k + H)
        let d: Vec<f64> = fwd.probs.iter().map(|&p| -scale * p * (p.max(LOG_CLAMP).ln() + h)).collect();
        self.backward(&fwd, &d, grad);
        h
    }

    pub(crate) fn ce(&self, x: &[f64], y: usize) -> f64 {
        ce_from_logits(&self.forward(x).logits, y)
    }
}

/// A feature vector with its (true or pseudo) class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

/// Weighted mean cross-entropy `sum w_i CE_i / sum w_i` and its exact gradient.
pub fn ce_loss_grad(params: &ModelParams, batch: &[LabeledSample], weights: &[f64]) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_dim(batch.len(), weights.len())?;
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidWeight("sample weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidWeight("sample weights sum to zero".into()));
    }
    let mut grad = Gradient::zeros(params.shape());
    let mut loss = 0.0;
    for (s, &w) in batch.iter().zip(weights) {
        check_dim(params.input_dim(), s.features.len())?;
        if s.label >= params.classes() {
            return Err(Error::DimensionMismatch { expected: params.classes(), got: s.label + 1 });
        }
        let l = params.accumulate_ce(&s.features, s.label, w / total, &mut grad.data);
        loss += w * l;
    }
    Ok((loss / total, grad))
}

/// Unweighted mean cross-entropy over `batch`.
pub fn mean_ce(params: &ModelParams, batch: &[LabeledSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for s in batch {
        check_dim(params.input_dim(), s.features.len())?;
        total += params.ce(&s.features, s.label);
    }
    Ok(total / batch.len() as f64)
}

/// Fraction of `batch` whose argmax prediction matches the label.
pub fn accuracy(params: &ModelParams, batch: &[LabeledSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut hits = 0usize;
    for s in batch {
        if params.predict(&s.features)? == s.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / batch.len() as f64)
}

/// `params - lr * grad`
pub fn sgd_step(params: &ModelParams, grad: &Gradient, lr: f64) -> ModelParams {
    let mut next = params.clone();
    sgd_step_in_place(&mut next, grad, lr);
    next
}

pub fn sgd_step_in_place(params: &mut ModelParams, grad: &Gradient, lr: f64) {
    debug_assert_eq!(params.data.len(), grad.data.len());
    for (p, g) in params.data.iter_mut().zip(&grad.data) {
        *p -= lr * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn with_bias(b: &[f64], dim: usize) -> ModelParams {
        let mut m = ModelParams::zeros(Shape::linear(dim, b.len())).unwrap();
        m.out_bias_mut().copy_from_slice(b);
        m
    }

    #[test]
    fn zero_params_predict_uniform() {
        let m = ModelParams::zeros(Shape::linear(3, 4)).unwrap();
        let p = m.predict_proba(&[1.0, -2.0, 0.5]).unwrap();
        for &v in p.as_slice() {
            assert_relative_eq!(v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn large_bias_gap() {
        // 1 / (1 + e^-10) = 0.999954602131...
        let m = with_bias(&[10.0, 0.0], 2);
        let p = m.predict_proba(&[0.3, 0.7]).unwrap();
        assert_relative_eq!(p.as_slice()[0], 0.999_954_602_131_297_6, epsilon = 1e-12);
        assert_relative_eq!(p.as_slice()[1], 4.539_786_870_239_04e-5, epsilon = 1e-12);
    }

    #[test]
    fn shift_invariance_and_overflow_safety() {
        let a = with_bias(&[1.0, 2.0, -0.5], 1);
        let b = with_bias(&[1001.0, 1002.0, 999.5], 1);
        let pa = a.predict_proba(&[0.0]).unwrap();
        let pb = b.predict_proba(&[0.0]).unwrap();
        for (x, y) in pa.as_slice().iter().zip(pb.as_slice()) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
        assert!((pb.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = ModelParams::zeros(Shape::linear(3, 2)).unwrap();
        assert!(matches!(m.predict_proba(&[1.0]), Err(Error::DimensionMismatch { expected: 3, got: 1 })));
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert_relative_eq!(entropy(&[1.0 / 7.0; 7]), 7f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(entropy(&[0.5, 0.5]), 0.693_147_180_559_945_3, epsilon = 1e-15);
    }

    #[test]
    fn ce_zero_at_confident_truth_and_ln_c_at_uniform() {
        // One-hot up to floating point: bias gap of 800 underflows exp().
        let m = with_bias(&[800.0, 0.0, 0.0], 2);
        let (loss, grad) = ce_loss_grad(&m, &[LabeledSample::new(vec![1.0, 1.0], 0)], &[1.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data.iter().all(|g| *g == 0.0));

        let m = ModelParams::zeros(Shape::linear(2, 5)).unwrap();
        let (loss, _) = ce_loss_grad(&m, &[LabeledSample::new(vec![0.3, 0.1], 2)], &[2.0]).unwrap();
        assert_relative_eq!(loss, 5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn ce_is_exact_at_both_extremes() {
        // Wrong class by a margin of 50: p_y is below 1e-21 and the loss is
        // the margin plus a tiny correction.
        assert_relative_eq!(ce_from_logits(&[50.0, 0.0], 1), 50.0 + (-50f64).exp().ln_1p(), epsilon = 1e-12);
        assert_relative_eq!(ce_from_logits(&[2000.0, 0.0, 1999.0], 1), 2000.0 + (1.0 + (-1f64).exp()).ln(), epsilon = 1e-9);
        // Right class by a margin of 20: the loss is about exp(-20), not 0.
        let loss = ce_from_logits(&[20.0, 0.0], 0);
        assert_relative_eq!(loss, (-20f64).exp(), max_relative = 1e-12);
        let m = with_bias(&[3.0, -1.0, 0.5], 2);
        let x = [0.2, -0.4];
        assert_relative_eq!(m.ce(&x, 1), -m.predict_proba(&x).unwrap().as_slice()[1].ln(), epsilon = 1e-12);
    }

    #[test]
    fn ce_errors() {
        let m = ModelParams::zeros(Shape::linear(2, 2)).unwrap();
        assert!(matches!(ce_loss_grad(&m, &[], &[]), Err(Error::EmptyBatch)));
        let b = [LabeledSample::new(vec![0.0, 0.0], 0)];
        assert!(matches!(ce_loss_grad(&m, &b, &[0.0]), Err(Error::InvalidWeight(_))));
        assert!(matches!(ce_loss_grad(&m, &b, &[-1.0]), Err(Error::InvalidWeight(_))));
    }

    #[test]
    fn sgd_cases() {
        let mut m = ModelParams::zeros(Shape::linear(2, 2)).unwrap();
        let g = Gradient { data: (0..m.as_slice().len()).map(|i| i as f64 - 1.5).collect() };
        let stepped = sgd_step(&m, &g, 1.0);
        for (p, gi) in stepped.as_slice().iter().zip(&g.data) {
            assert_eq!(*p, -gi);
        }
        m.as_mut_slice()[0] = 0.7;
        let zero = Gradient::zeros(m.shape());
        assert_eq!(sgd_step(&m, &zero, 0.3), m);
    }

    #[test]
    fn one_sgd_step_reduces_convex_loss() {
        let m = ModelParams::zeros(Shape::linear(2, 2)).unwrap();
        let batch = vec![
            LabeledSample::new(vec![1.0, 0.0], 0),
            LabeledSample::new(vec![-1.0, 0.2], 1),
            LabeledSample::new(vec![0.8, -0.3], 0),
        ];
        let w = vec![1.0; 3];
        let (before, g) = ce_loss_grad(&m, &batch, &w).unwrap();
        let (after, _) = ce_loss_grad(&sgd_step(&m, &g, 0.1), &batch, &w).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn input_norm_applies_before_affine_map() {
        let mut m = with_bias(&[0.0, 0.0], 1);
        m.set_out_weight(0, 0, 1.0);
        m.set_norm(Some(InputNorm { mean: vec![5.0], std: vec![2.0] })).unwrap();
        assert_relative_eq!(m.logits(&[9.0]).unwrap()[0], 2.0);
        assert_eq!(m.penultimate(&[9.0]).unwrap(), vec![9.0]);
    }
}
