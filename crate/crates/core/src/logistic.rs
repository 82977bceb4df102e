//! Ridge-penalized logistic regression by damped Newton iteration.
//!
//! Minimizes `Σᵢ [log(1 + e^{zᵢ}) − dᵢzᵢ] + ridge·‖β‖²` where
//! `zᵢ = β₀ + xᵢβ`; the intercept `β₀` is never penalized.

use nalgebra::{DMatrix, DVector};

use crate::error::{PmoeError, Result};
use crate::linalg::{self, log1p_exp, sigmoid};

pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;
/// Coefficient norm beyond which the fit is treated as diverging.
pub const DIVERGENCE_NORM: f64 = 1e3;
const MAX_HALVINGS: usize = 50;
const STEP_TOLERANCE: f64 = 1e-6;
const ROUNDOFF_STEP: f64 = 1e-8;
const ROUNDOFF_DECREMENT: f64 = 1e-10;
/// Step length that still counts as divergence when the iteration cap is hit.
const DIVERGING_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub intercept: f64,
    pub coef: DVector<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl LogisticFit {
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let mut z = x * &self.coef;
        z.add_scalar_mut(self.intercept);
        z
    }

    pub fn probabilities(&self, x: &DMatrix<f64>) -> DVector<f64> {
        self.linear_predictor(x).map(sigmoid)
    }
}

/// Penalized negative log-likelihood at the stacked parameter `[β₀, β]`.
pub fn objective(z_design: &DMatrix<f64>, d: &DVector<f64>, ridge: f64, beta: &DVector<f64>) -> f64 {
    let z = z_design * beta;
    let nll: f64 = z.iter().zip(d.iter()).map(|(&zi, &di)| log1p_exp(zi) - di * zi).sum();
    let pen: f64 = beta.iter().skip(1).map(|b| b * b).sum();
    nll + ridge * pen
}

/// Gradient of [`objective`].
pub fn gradient(z_design: &DMatrix<f64>, d: &DVector<f64>, ridge: f64, beta: &DVector<f64>) -> DVector<f64> {
    let mu = (z_design * beta).map(sigmoid);
    let mut g = z_design.tr_mul(&(mu - d));
    for j in 1..g.len() {
        g[j] += 2.0 * ridge * beta[j];
    }
    g
}

/// Fits the model with an intercept column prepended to `x`.
pub fn fit(x: &DMatrix<f64>, d: &DVector<f64>, ridge: f64) -> Result<LogisticFit> {
    if ridge < 0.0 || !ridge.is_finite() {
        return Err(PmoeError::InvalidInput(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    let z_design = linalg::with_intercept(x);
    let p = z_design.ncols();
    let mut beta = DVector::<f64>::zeros(p);
    let mut f = objective(&z_design, d, ridge, &beta);
    let mut grad_norm = f64::INFINITY;
    let mut last_step = f64::INFINITY;
    for iter in 0..MAX_ITERATIONS {
        let mu = (&z_design * &beta).map(sigmoid);
        let mut g = z_design.tr_mul(&(&mu - d));
        for j in 1..p {
            g[j] += 2.0 * ridge * beta[j];
        }
        grad_norm = g.norm();
        let w = mu.map(|m| m * (1.0 - m));
        let mut h = linalg::weighted_gram(&z_design, &w);
        for j in 1..p {
            h[(j, j)] += 2.0 * ridge;
        }
        let step = match linalg::cholesky_checked(h) {
            Ok(chol) => chol.solve(&g),
            // Without a penalty a singular Hessian means the likelihood keeps
            // improving along some direction.
            Err(_) if ridge == 0.0 => return Err(PmoeError::Separation),
            Err(e) => return Err(e),
        };
        // Under separation the gradient vanishes while Newton steps stay long.
        // At large n the gradient bottoms out at rounding level while the step
        // becomes negligible.
        let step_norm = step.norm();
        let scale = 1.0 + beta.norm();
        if (grad_norm <= GRADIENT_TOLERANCE && step_norm <= STEP_TOLERANCE * scale)
            || step_norm <= ROUNDOFF_STEP * scale
        {
            return Ok(finish(beta, iter, grad_norm));
        }
        let mut t = 1.0;
        let mut accepted = false;
        // Once the predicted decrease is below the objective's rounding level the
        // line search cannot tell steps apart; take the full Newton step.
        if g.dot(&step) <= ROUNDOFF_DECREMENT * f.abs().max(1.0) {
            beta -= &step;
            f = objective(&z_design, d, ridge, &beta);
            last_step = step_norm;
            continue;
        }
        for _ in 0..MAX_HALVINGS {
            let candidate = &beta - &step * t;
            let fc = objective(&z_design, d, ridge, &candidate);
            if fc <= f {
                beta = candidate;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if beta.norm() > DIVERGENCE_NORM {
            return Err(PmoeError::Separation);
        }
        if !accepted {
            // No representable decrease left.
            if grad_norm <= GRADIENT_TOLERANCE {
                return Ok(finish(beta, iter, grad_norm));
            }
            return Err(PmoeError::NoConvergence { solver: "logistic Newton", residual: grad_norm });
        }
        last_step = t * step.norm();
    }
    if ridge == 0.0 && last_step >= DIVERGING_STEP {
        return Err(PmoeError::Separation);
    }
    Err(PmoeError::NoConvergence { solver: "logistic Newton", residual: grad_norm })
}

fn finish(beta: DVector<f64>, iterations: usize, gradient_norm: f64) -> LogisticFit {
    let coef = beta.rows(1, beta.len() - 1).into_owned();
    LogisticFit { intercept: beta[0], coef, iterations, gradient_norm }
}
