//! Generalized cross validation over a descending λ grid.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PmoeError, Result};
use crate::linalg;
use crate::objective::PmoeProblem;
use crate::penalty::PenaltyWeights;
use crate::solver::{self, PmoeFit, SolverOptions};

pub const DEFAULT_GRID_POINTS: usize = 50;
pub const DEFAULT_GRID_RATIO: f64 = 1e-4;

/// How the fits along the grid are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathMode {
    /// Descending order, each fit warm-started from the previous one.
    #[default]
    Sequential,
    /// Every λ solved from zero, concurrently.
    Parallel,
}

/// Components of the criterion at one λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcvScore {
    pub rss: f64,
    pub effective_df: f64,
    pub value: f64,
}

impl GcvScore {
    fn degenerate(rss: f64, effective_df: f64) -> Self {
        Self { rss, effective_df, value: f64::INFINITY }
    }
}

#[derive(Debug, Clone)]
pub struct TuningPath {
    pub lambdas: Vec<f64>,
    pub scores: Vec<GcvScore>,
    pub fits: Vec<PmoeFit>,
    pub selected_index: usize,
}

impl TuningPath {
    pub fn gcv(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.value).collect()
    }

    pub fn best_fit(&self) -> &PmoeFit {
        &self.fits[self.selected_index]
    }

    pub fn best_lambda(&self) -> f64 {
        self.lambdas[self.selected_index]
    }
}

/// `(RSS/n) / (1 − d(λ)/n)²` for the fit on design `x`.
///
/// RSS comes from the unpenalized regression of `ỹ` on an intercept and the
/// selected columns. `d(λ) = tr[X_s (X_sᵀX_s + nΣ)⁻¹ X_sᵀ]` with
/// `Σ = diag(λνⱼ / |α̂ⱼ|)` over the selected set. A model with `d(λ) ≥ n`, or
/// one whose refit is singular, scores `+∞`.
pub fn gcv(x: &DMatrix<f64>, y_tilde: &DVector<f64>, fit: &PmoeFit, weights: &PenaltyWeights) -> GcvScore {
    let n = x.nrows();
    let nf = n as f64;
    let centered = {
        let m = y_tilde.mean();
        y_tilde.add_scalar(-m)
    };
    if fit.selected.is_empty() {
        let rss = centered.norm_squared();
        return GcvScore { rss, effective_df: 0.0, value: rss / nf };
    }
    let k = fit.selected.len();
    if k + 1 >= n {
        return GcvScore::degenerate(0.0, k as f64);
    }
    let xs = linalg::select_columns(x, &fit.selected);
    let rss = match linalg::least_squares(&linalg::with_intercept(&xs), y_tilde) {
        Ok(beta) => {
            let fitted = linalg::with_intercept(&xs) * beta;
            (y_tilde - fitted).norm_squared()
        }
        Err(_) => return GcvScore::degenerate(f64::NAN, k as f64),
    };
    let gram = linalg::gram(&xs);
    let mut a = gram.clone();
    for (idx, &j) in fit.selected.iter().enumerate() {
        a[(idx, idx)] += nf * fit.lambda * weights.nu[j] / fit.alpha_hat[j].abs();
    }
    let df = match linalg::cholesky_checked(a) {
        Ok(chol) => chol.solve(&gram).trace(),
        Err(_) => return GcvScore::degenerate(rss, f64::NAN),
    };
    if df >= nf {
        return GcvScore::degenerate(rss, df);
    }
    let shrink = 1.0 - df / nf;
    GcvScore { rss, effective_df: df, value: (rss / nf) / (shrink * shrink) }
}

/// `points` log-spaced values from `lambda_max` down to `lambda_max · ratio`.
pub fn default_grid(lambda_max: f64, points: usize, ratio: f64) -> Vec<f64> {
    if points == 1 {
        return vec![lambda_max];
    }
    let hi = lambda_max.ln();
    let lo = (lambda_max * ratio).ln();
    (0..points)
        .map(|k| if k == 0 { lambda_max } else { (hi + (lo - hi) * k as f64 / (points - 1) as f64).exp() })
        .collect()
}

fn prepare_grid(grid: Option<&[f64]>, problem: &PmoeProblem<'_>, weights: &PenaltyWeights) -> Result<Vec<f64>> {
    match grid {
        Some(values) => {
            if values.is_empty() {
                return Err(PmoeError::InvalidInput("lambda grid is empty".into()));
            }
            if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(PmoeError::InvalidInput(format!("lambda grid values must be positive, got {bad}")));
            }
            let mut sorted = values.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            sorted.dedup();
            Ok(sorted)
        }
        None => {
            let lmax = solver::lambda_max(problem, weights);
            if !(lmax > 0.0 && lmax.is_finite()) {
                return Err(PmoeError::InvalidInput(format!("degenerate lambda_max {lmax}")));
            }
            Ok(default_grid(lmax, DEFAULT_GRID_POINTS, DEFAULT_GRID_RATIO))
        }
    }
}

/// Solves along the grid and picks the GCV minimizer, preferring the larger λ on ties.
pub fn select_lambda(
    problem: &PmoeProblem<'_>,
    y_tilde: &DVector<f64>,
    weights: &PenaltyWeights,
    grid: Option<&[f64]>,
    mode: PathMode,
    options: &SolverOptions,
) -> Result<TuningPath> {
    let lambdas = prepare_grid(grid, problem, weights)?;
    let wrap = |lambda: f64| move |e: PmoeError| PmoeError::PathFailure { lambda, source: Box::new(e) };
    let fits: Vec<PmoeFit> = match mode {
        PathMode::Sequential => {
            let mut fits: Vec<PmoeFit> = Vec::with_capacity(lambdas.len());
            for &lambda in &lambdas {
                let init = fits.last().map(|f| &f.alpha_hat);
                let fit = solver::solve_with(problem, weights, lambda, init, options).map_err(wrap(lambda))?;
                fits.push(fit);
            }
            fits
        }
        PathMode::Parallel => lambdas
            .par_iter()
            .map(|&lambda| solver::solve_with(problem, weights, lambda, None, options).map_err(wrap(lambda)))
            .collect::<Result<_>>()?,
    };
    let scores: Vec<GcvScore> = fits.iter().map(|f| gcv(problem.x(), y_tilde, f, weights)).collect();
    let mut selected_index = 0;
    for (k, s) in scores.iter().enumerate() {
        if s.value < scores[selected_index].value {
            selected_index = k;
        }
    }
    Ok(TuningPath { lambdas, scores, fits, selected_index })
}
