use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("division by zero: {0}")]
    DivisionByZero(String),
    /// An estimator had a zero denominator; no value is produced.
    #[error("undefined estimate: {0}")]
    UndefinedEstimate(String),
    #[error("fit failure: {0}")]
    FitFailure(String),
    #[error("reconstruction failure: {0}")]
    ReconstructionFailure(String),
    #[error("data integrity: {0}")]
    DataIntegrity(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
