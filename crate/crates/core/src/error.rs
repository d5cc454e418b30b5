//! Error types shared across the crate.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum CalError {
    /// An argument violated its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A stated precondition of an operation does not hold for the input.
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    /// An enumeration or search exceeded its configured budget.
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    /// Training produced a non-finite quantity.
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CalError>;

impl CalError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CalError::InvalidArgument(msg.into())
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        CalError::PreconditionViolation(msg.into())
    }
}
