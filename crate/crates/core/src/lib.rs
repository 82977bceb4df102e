//! Confounder selection by a penalized modified objective and doubly robust
//! treatment-effect estimation.
//!
//! The pipeline standardizes covariates, fits pilot outcome and treatment
//! models, minimizes the penalized objective along a λ grid tuned by GCV, and
//! estimates the treatment effect by regressing the outcome on the
//! residualized treatment and the selected covariates.

pub mod baselines;
pub mod data;
pub mod effect;
pub mod error;
pub mod linalg;
pub mod logistic;
pub mod objective;
pub mod penalty;
pub mod pilot;
pub mod pipeline;
pub mod simulation;
pub mod solver;
pub mod tuning;

pub use baselines::{oracle, y_fit, BaselineFit, BaselineMethod};
pub use data::{gram_schmidt, standardize, ColumnScale, Dataset, OrthogonalizedDataset};
pub use effect::{bootstrap_se, estimate_effect, BootstrapResult, EffectEstimate, EffectOptions};
pub use error::{PmoeError, Result};
pub use objective::{taylor_weighted_sum, PmoeProblem};
pub use penalty::{penalty_weights, PenaltyWeights};
pub use pilot::{fit_pilot_outcome, fit_pilot_treatment, fit_pilots, PilotConfig, PilotEstimates};
pub use pipeline::{analyze, select, Analysis, PmoeConfig, Selection};
pub use simulation::{generate, run, run_with, Method, Scenario, SimulationReport};
pub use solver::{lambda_max, solve, solve_with, PmoeFit, SolverOptions};
pub use tuning::{gcv, select_lambda, GcvScore, PathMode, TuningPath};
