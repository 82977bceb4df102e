//! End-to-end procedure: pilots, penalty weights, GCV path and effect estimate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{gram_schmidt, Dataset};
use crate::effect::{self, EffectEstimate, EffectOptions};
use crate::error::{PmoeError, Result};
use crate::objective::PmoeProblem;
use crate::penalty::{penalty_weights, PenaltyWeights};
use crate::pilot::{fit_pilots, PilotConfig, PilotEstimates};
use crate::solver::{PmoeFit, SolverOptions};
use crate::tuning::{select_lambda, PathMode, TuningPath};

pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmoeConfig {
    pub tau: f64,
    pub pilot: PilotConfig,
    /// Run the penalized fit on Gram-Schmidt orthogonalized covariates.
    pub orthogonalize: bool,
    pub lambda_grid: Option<Vec<f64>>,
    pub path_mode: PathMode,
    pub solver: SolverOptions,
    pub effect: EffectOptions,
}

impl Default for PmoeConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            pilot: PilotConfig::default(),
            orthogonalize: false,
            lambda_grid: None,
            path_mode: PathMode::default(),
            solver: SolverOptions::default(),
            effect: EffectOptions::default(),
        }
    }
}

/// Result of the selection stage.
#[derive(Debug, Clone)]
pub struct Selection {
    pub pilots: PilotEstimates,
    pub weights: PenaltyWeights,
    pub path: TuningPath,
    pub orthogonalized: bool,
}

impl Selection {
    pub fn fit(&self) -> &PmoeFit {
        self.path.best_fit()
    }

    pub fn selected(&self) -> &[usize] {
        &self.fit().selected
    }
}

/// Covariates the penalized fit runs on: `x` itself or its orthogonalization.
pub fn working_design(ds: &Dataset, orthogonalize: bool) -> Result<DMatrix<f64>> {
    if orthogonalize {
        Ok(gram_schmidt(ds)?.u().clone())
    } else {
        Ok(ds.x().clone())
    }
}

fn require_standardized(ds: &Dataset) -> Result<()> {
    if ds.is_standardized() {
        Ok(())
    } else {
        Err(PmoeError::InvalidInput("the pipeline expects standardized covariates".into()))
    }
}

pub fn select(ds: &Dataset, config: &PmoeConfig) -> Result<Selection> {
    require_standardized(ds)?;
    let pilots = fit_pilots(ds, &config.pilot)?;
    let design = working_design(ds, config.orthogonalize)?;
    select_with(ds, &design, pilots, config)
}

/// Selection with precomputed pilots and working design.
///
/// Penalty weights always come from the pilots on the original covariates.
pub fn select_with(
    ds: &Dataset,
    design: &DMatrix<f64>,
    pilots: PilotEstimates,
    config: &PmoeConfig,
) -> Result<Selection> {
    let weights = penalty_weights(&pilots);
    let problem = PmoeProblem::new(design, &pilots.y_tilde, ds.d(), config.tau)?;
    let path = select_lambda(
        &problem,
        &pilots.y_tilde,
        &weights,
        config.lambda_grid.as_deref(),
        config.path_mode,
        &config.solver,
    )?;
    Ok(Selection { pilots, weights, path, orthogonalized: config.orthogonalize })
}

/// Outcome-only selection: the same solver with the treatment term removed
/// and unit penalty weights.
pub fn select_outcome_only(design: &DMatrix<f64>, pilots: PilotEstimates, config: &PmoeConfig) -> Result<Selection> {
    let weights = PenaltyWeights::unit(design.ncols());
    let problem = PmoeProblem::outcome_only(design, &pilots.y_tilde)?;
    let path = select_lambda(
        &problem,
        &pilots.y_tilde,
        &weights,
        config.lambda_grid.as_deref(),
        config.path_mode,
        &config.solver,
    )?;
    Ok(Selection { pilots, weights, path, orthogonalized: config.orthogonalize })
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub selection: Selection,
    pub effect: EffectEstimate,
    pub bootstrap_failed: Option<usize>,
}

/// Selection, effect estimate and, when `bootstrap` is `Some((B, seed))`, the
/// thresholded bootstrap standard error.
pub fn analyze(ds: &Dataset, config: &PmoeConfig, bootstrap: Option<(usize, u64)>) -> Result<Analysis> {
    let selection = select(ds, config)?;
    let mut estimate = effect::estimate_effect(ds, selection.selected(), &config.effect)?;
    let mut bootstrap_failed = None;
    if let Some((b, seed)) = bootstrap {
        let boot = effect::bootstrap_se(ds, config, b, seed)?;
        estimate = estimate.with_se(boot.se);
        bootstrap_failed = Some(boot.failed);
    }
    Ok(Analysis { selection, effect: estimate, bootstrap_failed })
}
