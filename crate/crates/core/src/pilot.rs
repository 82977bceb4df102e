//! Pilot fits feeding the penalty weights and the modified objective.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{PmoeError, Result};
use crate::{linalg, logistic};

/// Ridge applied when plain least squares or plain maximum likelihood is ill-posed.
pub const FALLBACK_RIDGE: f64 = 1.0;

/// Pilot ridge settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    /// Outcome ridge; `None` means 0 when `n > 2r` and [`FALLBACK_RIDGE`] otherwise.
    pub outcome_ridge: Option<f64>,
    pub treatment_ridge: f64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self { outcome_ridge: None, treatment_ridge: FALLBACK_RIDGE }
    }
}

impl PilotConfig {
    pub fn resolved_outcome_ridge(&self, n: usize, r: usize) -> f64 {
        self.outcome_ridge.unwrap_or(if n > 2 * r { 0.0 } else { FALLBACK_RIDGE })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotEstimates {
    pub theta_tilde: f64,
    pub alpha_tilde_y: DVector<f64>,
    pub alpha_tilde_d: DVector<f64>,
    pub y_tilde: DVector<f64>,
    pub outcome_ridge: f64,
    pub treatment_ridge: f64,
    /// Set when the treatment fit separated and was refitted with [`FALLBACK_RIDGE`].
    pub treatment_fallback: bool,
}

fn require_standardized(ds: &Dataset) -> Result<()> {
    if ds.is_standardized() {
        Ok(())
    } else {
        Err(PmoeError::InvalidInput("pilot fits expect standardized covariates".into()))
    }
}

/// Regresses `y` on `[1, d, x]` with the ridge applied to the covariate block.
///
/// Returns `(θ̃, α̃_y, ỹ)` with `ỹ = y − θ̃d`.
pub fn fit_pilot_outcome(ds: &Dataset, ridge: f64) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    require_standardized(ds)?;
    if ridge < 0.0 || !ridge.is_finite() {
        return Err(PmoeError::InvalidInput(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    let (n, r) = ds.x().shape();
    if ridge == 0.0 && r + 2 > n {
        return Err(PmoeError::SingularDesign);
    }
    let mut design = DMatrix::<f64>::zeros(n, r + 2);
    design.column_mut(0).fill(1.0);
    design.set_column(1, ds.d());
    design.columns_mut(2, r).copy_from(ds.x());
    let mut penalty = vec![ridge; r + 2];
    penalty[0] = 0.0;
    penalty[1] = 0.0;
    let beta = linalg::penalized_least_squares(&design, ds.y(), &penalty)?;
    let theta = beta[1];
    let alpha = beta.rows(2, r).into_owned();
    let y_tilde = ds.y() - ds.d() * theta;
    Ok((theta, alpha, y_tilde))
}

/// Ridge-penalized logistic regression of `d` on `x` (with intercept);
/// returns the covariate coefficients.
pub fn fit_pilot_treatment(ds: &Dataset, ridge: f64) -> Result<DVector<f64>> {
    require_standardized(ds)?;
    Ok(logistic::fit(ds.x(), ds.d(), ridge)?.coef)
}

/// Both pilot fits with ridge resolution and the separation fallback.
pub fn fit_pilots(ds: &Dataset, config: &PilotConfig) -> Result<PilotEstimates> {
    let outcome_ridge = config.resolved_outcome_ridge(ds.n(), ds.r());
    let (theta_tilde, alpha_tilde_y, y_tilde) = fit_pilot_outcome(ds, outcome_ridge)?;
    let (alpha_tilde_d, treatment_ridge, treatment_fallback) = match fit_pilot_treatment(ds, config.treatment_ridge) {
        Ok(a) => (a, config.treatment_ridge, false),
        Err(PmoeError::Separation) if config.treatment_ridge < FALLBACK_RIDGE => {
            log::warn!("treatment pilot separated; refitting with ridge {FALLBACK_RIDGE}");
            (fit_pilot_treatment(ds, FALLBACK_RIDGE)?, FALLBACK_RIDGE, true)
        }
        Err(e) => return Err(e),
    };
    Ok(PilotEstimates {
        theta_tilde,
        alpha_tilde_y,
        alpha_tilde_d,
        y_tilde,
        outcome_ridge,
        treatment_ridge,
        treatment_fallback,
    })
}
