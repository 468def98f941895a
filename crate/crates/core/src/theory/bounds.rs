//! Closed-form error bounds and the bound-minimising source weight.
//!
//! With source-like fraction `lambda0` and source weight `w0`:
//!
//! ```text
//! EB_T = w0 A       + R B        R = sqrt(w0^2/lambda0 + (1-w0)^2/(1-lambda0))
//! EB_S = (1 - w0) A + R B          = sqrt((w0-lambda0)^2 / (lambda0 (1-lambda0)) + 1)
//! ```
//!
//! The second form of `R` makes `R = 1` exact at `w0 = lambda0`. At
//! `lambda0 in {0, 1}` a term `x^2/0` is `0` when `x = 0` and `+inf` otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{accuracy, LabeledSample, ModelParams};

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// `x^2 / y` with `0^2/0 = 0` and `x^2/0 = +inf`.
fn sq_over(x: f64, y: f64) -> f64 {
    if y == 0.0 {
        if x == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        x * x / y
    }
}

/// The radical `R(w0, lambda0) >= 1`.
pub fn bound_radical(w0: f64, lambda0: f64) -> Result<f64> {
    check_unit("w0", w0)?;
    check_unit("lambda0", lambda0)?;
    if lambda0 == 0.0 || lambda0 == 1.0 {
        return Ok((sq_over(w0, lambda0) + sq_over(1.0 - w0, 1.0 - lambda0)).sqrt());
    }
    let u = w0 - lambda0;
    Ok((u * u / (lambda0 * (1.0 - lambda0)) + 1.0).sqrt())
}

/// Test-domain bound `EB_T`; `+inf` when `lambda0 in {0, 1}` and `w0 != lambda0`.
pub fn eval_test_error_bound(w0: f64, lambda0: f64, a: f64, b: f64) -> Result<f64> {
    let r = bound_radical(w0, lambda0)?;
    Ok(w0 * a + r * b)
}

/// Source-domain bound `EB_S`.
pub fn eval_source_error_bound(w0: f64, lambda0: f64, a: f64, b: f64) -> Result<f64> {
    let r = bound_radical(w0, lambda0)?;
    Ok((1.0 - w0) * a + r * b)
}

/// Empirical gap term `B = 2 sqrt((d ln(2N) - ln delta) / (2N))`.
pub fn gap_term_exact(d: f64, n: f64, delta: f64) -> f64 {
    2.0 * ((d * (2.0 * n).ln() - delta.ln()) / (2.0 * n)).sqrt()
}

/// Approximate gap term `B = c1 sqrt(d / N)`.
pub fn gap_term_approx(d: f64, n: f64, c1: f64) -> f64 {
    c1 * (d / n).sqrt()
}

/// Sample-complexity part of the divergence term:
/// `sqrt((2 d ln(2m) + ln(2/delta)) / m)`.
pub fn divergence_slack(d: f64, m: f64, delta: f64) -> f64 {
    ((2.0 * d * (2.0 * m).ln() + (2.0 / delta).ln()) / m).sqrt()
}

/// Divergence term `A = d_hat + 4 slack + 2 gamma`.
pub fn divergence_term(d_hat: f64, d: f64, m: f64, delta: f64, gamma: f64) -> f64 {
    d_hat + 4.0 * divergence_slack(d, m, delta) + 2.0 * gamma
}

/// Minimiser of `EB_T` over `w0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimalW0 {
    Interior(f64),
    /// The validity condition fails; the bound is increasing in `w0` and the
    /// minimiser is the boundary `w0 = 0`.
    Zero,
}

impl OptimalW0 {
    pub fn w0(&self) -> f64 {
        match *self {
            OptimalW0::Interior(w) => w,
            OptimalW0::Zero => 0.0,
        }
    }
}

/// Minimiser of `EB_T(., lambda0)` for an arbitrary gap term `B`:
/// `w0* = lambda0 - s A / sqrt(B^2 - A^2 s)` with `s = lambda0 (1 - lambda0)`,
/// valid when `lambda0 >= 1 - B^2/A^2` (which also puts `w0*` in `[0, lambda0]`).
pub fn optimal_w0_for_gap(lambda0: f64, a: f64, b: f64) -> Result<OptimalW0> {
    check_unit("lambda0", lambda0)?;
    if !(a >= 0.0 && b >= 0.0) {
        return Err(Error::config("A and B must be non-negative"));
    }
    if a == 0.0 || lambda0 == 0.0 || lambda0 == 1.0 {
        return Ok(OptimalW0::Interior(lambda0));
    }
    if lambda0 < 1.0 - (b * b) / (a * a) {
        return Ok(OptimalW0::Zero);
    }
    let s = lambda0 * (1.0 - lambda0);
    let radicand = b * b - a * a * s;
    if !(radicand > 0.0) {
        log::warn!("non-positive radicand in optimal w0 (lambda0={lambda0}, A={a}, B={b})");
        return Ok(OptimalW0::Zero);
    }
    Ok(OptimalW0::Interior((lambda0 - s * a / radicand.sqrt()).clamp(0.0, 1.0)))
}

/// Closed-form optimal `w0` with `B = c1 sqrt(d/N)`:
/// `w0* = lambda0 - lambda0 (1 - lambda0) sqrt(A^2 N / (c1^2 d - A^2 N lambda0 (1 - lambda0)))`,
/// valid for `lambda0 >= 1 - c1^2 d / (A^2 N)`; otherwise `w0* = 0`.
pub fn optimal_w0(lambda0: f64, a: f64, n: f64, d: f64, c1: f64) -> Result<OptimalW0> {
    if !(c1 > 0.0 && d >= 1.0 && n >= 1.0) {
        return Err(Error::config("optimal w0 needs c1 > 0, d >= 1 and N >= 1"));
    }
    optimal_w0_for_gap(lambda0, a, gap_term_approx(d, n, c1))
}

/// Minimises `EB_T(., lambda0)` over the grid `{0, 1/steps, .., 1}`; ties go
/// to the smaller `w0`.
pub fn grid_argmin_w0(lambda0: f64, a: f64, b: f64, steps: usize) -> Result<f64> {
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=steps {
        let w = i as f64 / steps as f64;
        let v = eval_test_error_bound(w, lambda0, a, b)?;
        if v < best.0 {
            best = (v, w);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Strict,
    /// Equality at a degenerate point (`A = 0`); not a violation.
    Boundary,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lambda0: f64,
    pub a: f64,
    pub b: f64,
    /// Bound with active labels (`w0 = lambda0`).
    pub with_labels: f64,
    /// Reference bound without them.
    pub reference: f64,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<BoundCheck>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Violation)
    }

    pub fn violations(&self) -> usize {
        self.checks.iter().filter(|c| c.status == CheckStatus::Violation).count()
    }
}

fn classify(with_labels: f64, reference: f64, a: f64) -> CheckStatus {
    if with_labels < reference {
        CheckStatus::Strict
    } else if a == 0.0 && with_labels == reference {
        CheckStatus::Boundary
    } else {
        CheckStatus::Violation
    }
}

/// Test bound with labeled test data (`w0 = lambda0`) against the no-label
/// reference `EB_T(1, 1) = A + B`, for each `lambda0` in the grid.
pub fn check_thm2(a: f64, b_fn: impl Fn(f64) -> f64, lambda_grid: &[f64]) -> Result<CheckReport> {
    let mut checks = Vec::with_capacity(lambda_grid.len());
    for &lambda0 in lambda_grid {
        if !(lambda0 > 0.0 && lambda0 < 1.0) {
            return Err(Error::config(format!("lambda grid must lie in (0, 1), got {lambda0}")));
        }
        let b = b_fn(lambda0);
        let with_labels = eval_test_error_bound(lambda0, lambda0, a, b)?;
        let reference = eval_test_error_bound(1.0, 1.0, a, b)?;
        checks.push(BoundCheck { lambda0, a, b, with_labels, reference, status: classify(with_labels, reference, a) });
    }
    Ok(CheckReport { checks })
}

/// Source bound with source-like samples (`w0 = lambda0`) against the
/// reference without them, `EB_S(0, 0) = A + B`.
pub fn check_source_bound(a: f64, b_fn: impl Fn(f64) -> f64, lambda_grid: &[f64]) -> Result<CheckReport> {
    let mut checks = Vec::with_capacity(lambda_grid.len());
    for &lambda0 in lambda_grid {
        if !(lambda0 > 0.0 && lambda0 < 1.0) {
            return Err(Error::config(format!("lambda grid must lie in (0, 1), got {lambda0}")));
        }
        let b = b_fn(lambda0);
        let with_labels = eval_source_error_bound(lambda0, lambda0, a, b)?;
        let reference = eval_source_error_bound(0.0, 0.0, a, b)?;
        checks.push(BoundCheck { lambda0, a, b, with_labels, reference, status: classify(with_labels, reference, a) });
    }
    Ok(CheckReport { checks })
}

/// Scalars of the per-domain bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// VC-dimension surrogate.
    pub d: f64,
    /// Total labeled count.
    pub n: f64,
    /// Unlabeled sample count per domain.
    pub m: f64,
    pub delta: f64,
    pub w: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `gamma[i]`: ideal joint error of domain `i` with the evaluated domain.
    pub gamma: Vec<f64>,
    /// `dists[i][j]`: estimated divergence between domains `i` and `j`.
    pub dists: Vec<Vec<f64>>,
    /// `optimal_errors[j]`: error of the best hypothesis on domain `j`.
    pub optimal_errors: Vec<f64>,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let k = self.w.len();
        if k == 0
            || self.lambda.len() != k
            || self.gamma.len() != k
            || self.optimal_errors.len() != k
            || self.dists.len() != k
            || self.dists.iter().any(|r| r.len() != k)
        {
            return Err(Error::config("bound inputs must all have one entry per domain"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta must lie in (0, 1)"));
        }
        if !(self.d >= 1.0 && self.n >= 1.0 && self.m >= 1.0) {
            return Err(Error::config("d, N and m must be at least 1"));
        }
        for (name, v) in [("w", &self.w), ("lambda", &self.lambda)] {
            if v.iter().any(|x| !(*x >= 0.0)) {
                return Err(Error::config(format!("{name} entries must be non-negative")));
            }
            if (v.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("{name} must sum to 1")));
            }
        }
        Ok(())
    }

    /// `C = sqrt(sum_i w_i^2/lambda_i * (d ln(2N) - ln delta) / (2N))`.
    pub fn complexity_term(&self) -> Result<f64> {
        let mut ratio = 0.0;
        for (i, (&w, &l)) in self.w.iter().zip(&self.lambda).enumerate() {
            if l == 0.0 && w > 0.0 {
                return Err(Error::InvalidWeight(format!("domain {i} has weight {w} but no samples")));
            }
            ratio += sq_over(w, l);
        }
        Ok((ratio * (self.d * (2.0 * self.n).ln() - self.delta.ln()) / (2.0 * self.n)).sqrt())
    }
}

/// Right-hand side of the per-domain bound for domain `j`:
/// `eps_j* + 2 sum_{i != j} w_i (d_ij / 2 + 2 slack + gamma_i) + 2C`.
pub fn eval_thm1_domain_bound(inputs: &BoundInputs, j: usize) -> Result<f64> {
    inputs.validate()?;
    if j >= inputs.w.len() {
        return Err(Error::config(format!("domain {j} out of range")));
    }
    let slack = divergence_slack(inputs.d, inputs.m, inputs.delta);
    let mut sum = 0.0;
    for i in (0..inputs.w.len()).filter(|&i| i != j) {
        sum += inputs.w[i] * (0.5 * inputs.dists[i][j] + 2.0 * slack + inputs.gamma[i]);
    }
    Ok(inputs.optimal_errors[j] + 2.0 * sum + 2.0 * inputs.complexity_term()?)
}

/// Source-error bound when training on source-like data: domain `source`
/// plays the evaluated role and every domain (including index `source`)
/// contributes `w_i (d_i,S + 4 slack + 2 gamma_i)`.
pub fn eval_source_domain_bound(inputs: &BoundInputs, source: usize) -> Result<f64> {
    inputs.validate()?;
    if source >= inputs.w.len() {
        return Err(Error::config(format!("domain {source} out of range")));
    }
    let slack = divergence_slack(inputs.d, inputs.m, inputs.delta);
    let sum: f64 = (0..inputs.w.len())
        .map(|i| inputs.w[i] * (inputs.dists[i][source] + 4.0 * slack + 2.0 * inputs.gamma[i]))
        .sum();
    Ok(inputs.optimal_errors[source] + sum + 2.0 * inputs.complexity_term()?)
}

/// `sum_j w_j * err_j` where `err_j` is the 0/1 error of `h` on set `j`.
pub fn empirical_weighted_error(h: &ModelParams, datasets: &[&[LabeledSample]], w: &[f64]) -> Result<f64> {
    if datasets.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: datasets.len(), got: w.len() });
    }
    if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidWeight("weights must be non-negative and sum to 1".into()));
    }
    let mut total = 0.0;
    for (j, (set, &wj)) in datasets.iter().zip(w).enumerate() {
        if wj == 0.0 {
            continue;
        }
        if set.is_empty() {
            return Err(Error::InvalidWeight(format!("weight {wj} on empty dataset {j}")));
        }
        total += wj * (1.0 - accuracy(h, set)?);
    }
    Ok(total)
}
