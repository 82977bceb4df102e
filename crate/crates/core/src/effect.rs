//! Doubly robust propensity-score regression and thresholded bootstrap.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{PmoeError, Result};
use crate::pilot::FALLBACK_RIDGE;
use crate::pipeline::{self, PmoeConfig};
use crate::{linalg, logistic};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;
/// Largest tolerated share of failed bootstrap replicates.
pub const MAX_BOOTSTRAP_FAILURE_RATE: f64 = 0.10;
const PROPENSITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EffectOptions {
    /// Add `π̂` and `π̂²` to the linear working model for the outcome.
    pub propensity_terms: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectEstimate {
    pub theta_hat: f64,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub selected: Vec<usize>,
    pub pi_hat: DVector<f64>,
    /// Set when the propensity fit separated and was refitted with a ridge.
    pub propensity_fallback: bool,
}

impl EffectEstimate {
    pub fn with_se(mut self, se: f64) -> Self {
        self.se = Some(se);
        self.ci = Some((self.theta_hat - Z_95 * se, self.theta_hat + Z_95 * se));
        self
    }
}

/// Fitted propensities on the selected columns and whether the ridge fallback fired.
pub fn propensity(ds: &Dataset, selected: &[usize]) -> Result<(DVector<f64>, bool)> {
    let n = ds.n();
    if selected.is_empty() {
        let p = ds.d().mean();
        return Ok((DVector::from_element(n, p), false));
    }
    let xs = linalg::select_columns(ds.x(), selected);
    let (fit, fallback) = match logistic::fit(&xs, ds.d(), 0.0) {
        Ok(f) => (f, false),
        Err(PmoeError::Separation) | Err(PmoeError::NoConvergence { .. }) => {
            log::warn!("propensity fit separated; refitting with ridge {FALLBACK_RIDGE}");
            (logistic::fit(&xs, ds.d(), FALLBACK_RIDGE)?, true)
        }
        Err(e) => return Err(e),
    };
    let pi = fit.probabilities(&xs).map(|p| p.clamp(PROPENSITY_FLOOR, 1.0 - PROPENSITY_FLOOR));
    Ok((pi, fallback))
}

/// `θ̂` from the least-squares fit of `y` on `[1, d − π̂, X_selected]`.
pub fn estimate_effect(ds: &Dataset, selected: &[usize], options: &EffectOptions) -> Result<EffectEstimate> {
    let n = ds.n();
    let k = selected.len();
    if let Some(&bad) = selected.iter().find(|&&j| j >= ds.r()) {
        return Err(PmoeError::InvalidInput(format!("selected column {bad} out of range")));
    }
    let extra = if options.propensity_terms && k > 0 { 2 } else { 0 };
    if n <= k + 2 + extra {
        return Err(PmoeError::InvalidInput(format!("{n} rows cannot support {k} selected covariates")));
    }
    let (pi_hat, propensity_fallback) = propensity(ds, selected)?;
    let s = ds.d() - &pi_hat;
    let mut design = DMatrix::<f64>::zeros(n, 2 + k + extra);
    design.column_mut(0).fill(1.0);
    design.set_column(1, &s);
    for (c, &j) in selected.iter().enumerate() {
        design.set_column(2 + c, &ds.x().column(j));
    }
    if extra == 2 {
        design.set_column(2 + k, &pi_hat);
        design.set_column(3 + k, &pi_hat.component_mul(&pi_hat));
    }
    let beta = linalg::least_squares(&design, ds.y())?;
    Ok(EffectEstimate {
        theta_hat: beta[1],
        se: None,
        ci: None,
        selected: selected.to_vec(),
        pi_hat,
        propensity_fallback,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub se: f64,
    pub thetas: Vec<f64>,
    pub failed: usize,
}

/// Independent stream for replicate `index` of the run seeded by `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs the full selection pipeline on one resample and estimates θ on the
/// coefficients that survive the `1/√n` threshold.
fn bootstrap_replicate(ds: &Dataset, config: &PmoeConfig, rows: &[usize]) -> Result<f64> {
    let (resampled, _) = ds.resample(rows)?.standardize()?;
    let selection = pipeline::select(&resampled, config)?;
    let cut = 1.0 / (resampled.n() as f64).sqrt();
    let alpha = &selection.fit().alpha_hat;
    let kept: Vec<usize> = (0..alpha.len()).filter(|&j| alpha[j].abs() > cut).collect();
    Ok(estimate_effect(&resampled, &kept, &config.effect)?.theta_hat)
}

/// Nonparametric bootstrap standard error of `θ̂` with thresholded selection.
pub fn bootstrap_se(ds: &Dataset, config: &PmoeConfig, b: usize, seed: u64) -> Result<BootstrapResult> {
    if b < 100 {
        return Err(PmoeError::InvalidInput(format!("bootstrap needs at least 100 replicates, got {b}")));
    }
    let n = ds.n();
    let outcomes: Vec<Result<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = replicate_rng(seed, index);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            bootstrap_replicate(ds, config, &rows)
        })
        .collect();
    let thetas: Vec<f64> = outcomes.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let failed = b - thetas.len();
    if failed as f64 > MAX_BOOTSTRAP_FAILURE_RATE * b as f64 || thetas.len() < 2 {
        return Err(PmoeError::TooManyFailures { failed, total: b });
    }
    if failed > 0 {
        log::warn!("{failed} of {b} bootstrap replicates failed and were dropped");
    }
    Ok(BootstrapResult { se: linalg::sample_sd(&thetas), thetas, failed })
}
