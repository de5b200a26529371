use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix index {index} out of range for a set of {count} matrices")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed matrix data: {0}")]
    Malformed(String),

    #[error("problem exceeds the supported size envelope: {0}")]
    Envelope(String),

    #[error("no conclusive solver outcome: {0}")]
    Undetermined(String),

    #[error("certificate failed validation: {0}")]
    Validation(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
