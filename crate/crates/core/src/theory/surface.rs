//! Loss surface over the balancing pair `(lambda0, w0)`.
//!
//! Each cell trains on `N` labeled samples, a fraction `lambda0` drawn from the
//! source training split and the rest from the pooled target training set,
//! fine-tuning from the source model with loss weight `w0` on the source part.
//! The training set depends only on `(seed, lambda0)`, so rows of one
//! `lambda0` differ only in `w0` and the fine-tuning draws.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{balanced_finetune, FinetuneConfig, WeightPlan};
use crate::error::{Error, Result};
use crate::model::{mean_ce, LabeledSample, ModelParams};
use crate::rng::Rng;
use crate::streams::Benchmark;

pub const SURFACE_HEADER: &str = "lambda0,w0,seed,test_loss,source_loss,combined_loss";

/// `{0, 1/steps, .., 1}` restricted to `[lo, hi]`.
pub fn unit_grid(steps: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..=steps).map(|i| i as f64 / steps as f64).filter(|v| *v >= lo - 1e-12 && *v <= hi + 1e-12).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub lambda_grid: Vec<f64>,
    pub w_grid: Vec<f64>,
    pub samples: usize,
    pub seeds: Vec<u64>,
    pub finetune: FinetuneConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambda_grid: unit_grid(10, 0.1, 0.9),
            w_grid: unit_grid(10, 0.1, 0.9),
            samples: 500,
            seeds: vec![0, 1, 2],
            finetune: FinetuneConfig { max_inner_steps: 200, tol_patience: 20, ..FinetuneConfig::default() },
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.finetune.validate()?;
        let unit = |v: &f64| (0.0..=1.0).contains(v);
        if self.lambda_grid.is_empty() || self.w_grid.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("sweep grids and seed list must be non-empty"));
        }
        if !self.lambda_grid.iter().all(unit) || !self.w_grid.iter().all(unit) {
            return Err(Error::config("sweep grids must lie in [0, 1]"));
        }
        if self.samples == 0 {
            return Err(Error::config("sweep needs at least one sample per cell"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub lambda0: f64,
    pub w0: f64,
    pub seed: u64,
    pub test_loss: f64,
    pub source_loss: f64,
    pub combined_loss: f64,
}

/// Rows ordered by seed, then `lambda0`, then `w0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceTable {
    pub lambda_grid: Vec<f64>,
    pub w_grid: Vec<f64>,
    pub rows: Vec<SurfaceRow>,
}

impl SurfaceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SURFACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.4},{:.4},{},{:.6},{:.6},{:.6}",
                r.lambda0, r.w0, r.seed, r.test_loss, r.source_loss, r.combined_loss
            );
        }
        out
    }

    /// Seed-averaged `(test, source, combined)` loss per cell, indexed
    /// `[lambda][w]`.
    pub fn mean_losses(&self) -> Vec<Vec<(f64, f64, f64)>> {
        let (nl, nw) = (self.lambda_grid.len(), self.w_grid.len());
        let mut acc = vec![vec![(0.0, 0.0, 0.0, 0usize); nw]; nl];
        for r in &self.rows {
            let li = self.lambda_grid.iter().position(|&l| l == r.lambda0);
            let wi = self.w_grid.iter().position(|&w| w == r.w0);
            if let (Some(li), Some(wi)) = (li, wi) {
                let c = &mut acc[li][wi];
                c.0 += r.test_loss;
                c.1 += r.source_loss;
                c.2 += r.combined_loss;
                c.3 += 1;
            }
        }
        acc.into_iter()
            .map(|row| row.into_iter().map(|(t, s, c, n)| (t / n as f64, s / n as f64, c / n as f64)).collect())
            .collect()
    }

    /// For each `lambda0`, the `w0` minimising mean test loss (ties to the
    /// smaller `w0`).
    pub fn test_argmin_w0(&self) -> Vec<(f64, f64)> {
        self.mean_losses()
            .iter()
            .zip(&self.lambda_grid)
            .map(|(row, &l)| {
                let (wi, _) = row.iter().enumerate().fold((0, f64::INFINITY), |best, (i, c)| {
                    if c.0 < best.1 {
                        (i, c.0)
                    } else {
                        best
                    }
                });
                (l, self.w_grid[wi])
            })
            .collect()
    }

    /// Cell `(lambda0, w0)` minimising mean combined loss.
    pub fn combined_argmin(&self) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for (li, row) in self.mean_losses().iter().enumerate() {
            for (wi, c) in row.iter().enumerate() {
                if c.2 < best.0 {
                    best = (c.2, self.lambda_grid[li], self.w_grid[wi]);
                }
            }
        }
        (best.1, best.2)
    }
}

fn take_random(pool: &[LabeledSample], n: usize, rng: &mut Rng) -> Result<Vec<LabeledSample>> {
    if n > pool.len() {
        return Err(Error::InsufficientSamples { need: n, got: pool.len() });
    }
    Ok(rng.permutation(pool.len()).into_iter().take(n).map(|i| pool[i].clone()).collect())
}

/// Runs every `(seed, lambda0, w0)` cell in parallel. Cell `i` (in row order)
/// fine-tunes with seed `seed ^ i`, so results do not depend on scheduling.
pub fn error_surface_sweep(phi: &ModelParams, bench: &Benchmark, cfg: &SweepConfig) -> Result<SurfaceTable> {
    cfg.validate()?;
    let source_train = &bench.source().train;
    let target_train = bench.target_pool();
    let source_test = &bench.source().test;
    let target_test: Vec<LabeledSample> = bench.targets().iter().flat_map(|d| d.test.iter().cloned()).collect();
    if target_test.is_empty() || source_test.is_empty() {
        return Err(Error::EmptyBatch);
    }

    let mut datasets = Vec::new();
    for &seed in &cfg.seeds {
        for (li, &lambda0) in cfg.lambda_grid.iter().enumerate() {
            let n_src = (lambda0 * cfg.samples as f64).round() as usize;
            let mut rng = Rng::new(seed).derive(li as u64);
            let src = take_random(source_train, n_src, &mut rng)?;
            let tgt = take_random(&target_train, cfg.samples - n_src, &mut rng)?;
            datasets.push((seed, lambda0, src, tgt));
        }
    }
    let nw = cfg.w_grid.len();
    let rows = (0..datasets.len() * nw)
        .into_par_iter()
        .map(|cell| {
            let (seed, lambda0, src, tgt) = &datasets[cell / nw];
            let w0 = cfg.w_grid[cell % nw];
            let mut rng = Rng::new(seed ^ cell as u64);
            let out = balanced_finetune(phi, src, tgt, &WeightPlan { lambda0: *lambda0, w0 }, &cfg.finetune, &mut rng)?;
            let test_loss = mean_ce(&out.params, &target_test)?;
            let source_loss = mean_ce(&out.params, source_test)?;
            Ok(SurfaceRow { lambda0: *lambda0, w0, seed: *seed, test_loss, source_loss, combined_loss: test_loss + source_loss })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurfaceTable { lambda_grid: cfg.lambda_grid.clone(), w_grid: cfg.w_grid.clone(), rows })
}
