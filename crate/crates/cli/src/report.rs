//! JSON report layouts.

use serde::Serialize;

use pmoe::PmoeConfig;

use crate::args::Orthogonalize;

pub const SCHEMA_VERSION: u32 = 1;

/// Everything that determined a data-driven run.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub input: String,
    pub outcome: String,
    pub treatment: String,
    pub covariates: Vec<String>,
    pub orthogonalize_mode: Orthogonalize,
    pub max_abs_correlation: f64,
    pub pmoe: PmoeConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GcvPoint {
    pub lambda: f64,
    /// `None` when the criterion is degenerate at this λ.
    pub gcv: Option<f64>,
    pub rss: f64,
    pub effective_df: f64,
    pub n_selected: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub n: usize,
    pub r: usize,
    pub orthogonalized: bool,
    pub theta_tilde: f64,
    pub outcome_ridge: f64,
    pub treatment_ridge: f64,
    pub treatment_fallback: bool,
    pub capped_weights: usize,
    pub penalty_weights: Vec<f64>,
    pub kkt_violation: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: ResolvedConfig,
    pub selected: Vec<String>,
    pub selected_indices: Vec<usize>,
    pub alpha_hat: Vec<f64>,
    pub lambda_hat: f64,
    pub tau: f64,
    pub gcv_path: Vec<GcvPoint>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: ResolvedConfig,
    pub theta_hat: f64,
    pub se: Option<f64>,
    pub ci: Option<[f64; 2]>,
    pub selected: Vec<String>,
    pub lambda_hat: f64,
    #[serde(rename = "B")]
    pub bootstrap: usize,
    pub bootstrap_failed: Option<usize>,
    pub propensity_fallback: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport<'a> {
    pub schema_version: u32,
    pub command: &'static str,
    pub scenario_definition: &'a pmoe::Scenario,
    pub methods: Vec<pmoe::Method>,
    pub pmoe: &'a PmoeConfig,
    pub report: &'a pmoe::SimulationReport,
}
