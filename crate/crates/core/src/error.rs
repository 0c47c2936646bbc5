use thiserror::Error;

/// Errors raised by the calibration pipeline and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "weight unbounded: target variance {target} must be below behavior variance {behavior}"
    )]
    WeightUnbounded { target: f64, behavior: f64 },

    #[error("insufficient training data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("every policy in the class has zero density at some logged sample")]
    NoFeasiblePolicy,

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("empty test set")]
    EmptyTestSet,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
