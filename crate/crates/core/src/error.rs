use thiserror::Error;

/// Errors raised by constructors, protocols and checks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported size: {0}")]
    UnsupportedSize(String),
    #[error("unsupported representation: {0}")]
    UnsupportedRepresentation(String),
    #[error("conditioning on an event of zero mass")]
    EmptyConditioning,
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("net construction failed after {attempts} attempts: {detail}")]
    NetConstruction { attempts: usize, detail: String },
    #[error("malformed container: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::InvalidArgument(msg.into()))
}
