use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "pmoe", version, about = "Confounder selection and treatment-effect estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select confounders and report the penalized fit.
    Select(SelectArgs),
    /// Select confounders and estimate the treatment effect.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo comparison on a built-in or custom scenario.
    Simulate(SimulateArgs),
    /// Emit the GCV path and optional coefficient-versus-τ sweep as CSV.
    #[command(name = "gcv-path")]
    GcvPath(GcvPathArgs),
    /// Draw one dataset from a scenario and write it as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Orthogonalize {
    /// On when some pair of covariates has |correlation| above 0.05.
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodName {
    Pmoe,
    Yfit,
    Oracle,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub outcome: String,
    /// Binary column with values 0, 1, true or false.
    #[arg(long)]
    pub treatment: String,
    /// Comma-separated covariate columns; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[arg(long, default_value_t = pmoe::pipeline::DEFAULT_TAU)]
    pub tau: f64,
    /// Comma-separated λ values replacing the default grid.
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Orthogonalize::Auto)]
    pub orthogonalize: Orthogonalize,
    /// Ridge for the outcome pilot; defaults to 0 when n > 2r and 1 otherwise.
    #[arg(long)]
    pub outcome_ridge: Option<f64>,
    #[arg(long, default_value_t = pmoe::pilot::FALLBACK_RIDGE)]
    pub treatment_ridge: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// JSON report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Bootstrap replicates for the standard error; 0 disables it.
    #[arg(long, default_value_t = 500)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add the fitted propensity and its square to the outcome working model.
    #[arg(long)]
    pub propensity_terms: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Built-in scenario name.
    #[arg(value_name = "SCENARIO", conflicts_with_all = ["scenario", "scenario_file"])]
    pub positional: Option<String>,
    /// Built-in scenario name.
    #[arg(long, conflicts_with = "scenario_file")]
    pub scenario: Option<String>,
    /// JSON scenario description.
    #[arg(long)]
    pub scenario_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "pmoe,yfit,oracle")]
    pub methods: Vec<MethodName>,
    /// τ values; each adds one PMOE method.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub tau: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `auto` keeps the scenario's own setting.
    #[arg(long, value_enum, default_value_t = Orthogonalize::Auto)]
    pub orthogonalize: Orthogonalize,
    /// Output directory for report.json, table.csv and draws.csv; the table
    /// goes to standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GcvPathArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Path CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated τ values for a coefficient sweep at fixed λ.
    #[arg(long, value_delimiter = ',')]
    pub tau_sweep: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.01)]
    pub sweep_lambda: f64,
    /// Sweep CSV; required with `--tau-sweep`.
    #[arg(long, requires = "tau_sweep")]
    pub sweep_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
