use thiserror::Error;

/// Errors raised by the selection and estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PmoeError {
    #[error("column {0} has zero variance")]
    ConstantColumn(usize),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("column {0} is numerically in the span of the preceding columns")]
    RankDeficient(usize),

    #[error("normal equations are numerically singular; retry with a ridge penalty")]
    SingularDesign,

    #[error("logistic fit diverged (complete or quasi-complete separation); supply a ridge penalty")]
    Separation,

    #[error("{solver} did not converge (residual {residual:.3e})")]
    NoConvergence { solver: &'static str, residual: f64 },

    #[error("solver failed at lambda = {lambda:.6e}: {source}")]
    PathFailure {
        lambda: f64,
        #[source]
        source: Box<PmoeError>,
    },

    #[error("too many failed replicates: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl PmoeError {
    /// Whether the error describes bad input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, PmoeError::ConstantColumn(_) | PmoeError::NonFinite { .. } | PmoeError::InvalidInput(_))
    }
}

pub type Result<T> = std::result::Result<T, PmoeError>;
