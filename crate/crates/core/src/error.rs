use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid loss family: {0}")]
    InvalidLoss(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset has {actual} examples but the schedule consumes {expected}")]
    SampleCountMismatch { expected: usize, actual: usize },

    #[error("step size {eta} exceeds the contraction limit 2/beta = {limit}")]
    StepTooLarge { eta: f64, limit: f64 },

    #[error("loss is not smooth; {0} requires a smooth loss")]
    NonSmoothLoss(&'static str),

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid shift allocation: running slack z_{index} = {slack} is negative")]
    InvalidAllocation { index: usize, slack: f64 },

    #[error("{0} has no closed form for this distribution")]
    NoClosedForm(&'static str),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("privacy check failed: {0}")]
    PrivacyViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
