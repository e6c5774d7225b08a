use thiserror::Error;

/// Errors raised by the statistics, resampling and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("column {col} has zero standard deviation; soft minimum is undefined")]
    DegenerateColumn { col: usize },

    #[error("no true mean attached to the data matrix")]
    MissingTrueMean,

    #[error("infeasible weight scheme: theta[{index}] = {value} lies outside [0, 1]")]
    InfeasibleTheta { index: usize, value: f64 },

    #[error("enumeration too large: n = {n} exceeds the limit of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("unsupported test function for this check: {0}")]
    UnsupportedFunction(String),

    #[error(
        "workload K*B*n*p = {work:.3e} exceeds the guard of {limit:.3e}; pass --allow-long to run it"
    )]
    ResourceGuard { work: f64, limit: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
