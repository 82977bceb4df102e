//! Comparator estimators: outcome-model lasso and the known-support oracle.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::effect::{estimate_effect, EffectOptions};
use crate::error::Result;
use crate::pilot::{fit_pilots, PilotEstimates};
use crate::pipeline::{self, PmoeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineMethod {
    YFit,
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFit {
    pub method: BaselineMethod,
    pub selected: Vec<usize>,
    pub theta_hat: f64,
}

/// Lasso on the outcome model with the treatment left unpenalized, tuned by
/// GCV. The treatment enters through the pilot residual `ỹ = y − θ̃d`.
pub fn y_fit(ds: &Dataset, config: &PmoeConfig) -> Result<BaselineFit> {
    let pilots = fit_pilots(ds, &config.pilot)?;
    let design = pipeline::working_design(ds, config.orthogonalize)?;
    y_fit_with(ds, &design, pilots, config)
}

pub fn y_fit_with(
    ds: &Dataset,
    design: &DMatrix<f64>,
    pilots: PilotEstimates,
    config: &PmoeConfig,
) -> Result<BaselineFit> {
    let selection = pipeline::select_outcome_only(design, pilots, config)?;
    let selected = selection.selected().to_vec();
    let theta_hat = estimate_effect(ds, &selected, &config.effect)?.theta_hat;
    Ok(BaselineFit { method: BaselineMethod::YFit, selected, theta_hat })
}

pub fn oracle(ds: &Dataset, true_support: &[usize], options: &EffectOptions) -> Result<BaselineFit> {
    let theta_hat = estimate_effect(ds, true_support, options)?.theta_hat;
    Ok(BaselineFit { method: BaselineMethod::Oracle, selected: true_support.to_vec(), theta_hat })
}
