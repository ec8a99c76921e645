//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by dataset ingestion, model validation, and estimation.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data or configuration is malformed (schema/validation problems).
    #[error("invalid input: {0}")]
    Validation(String),

    /// A requested operation is not defined for this model or outcome kind
    /// (e.g. linearization for a discrete outcome).
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A numerical procedure failed (singular system, non-finite values, ...).
    #[error("computation failed: {0}")]
    Computation(String),

    /// File I/O problems while reading data or writing artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV parsing problems, with file context attached by the caller.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Shorthand for a validation error.
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Shorthand for an unsupported-operation error.
    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    /// Shorthand for a computation error.
    pub fn computation(msg: impl Into<String>) -> Self {
        Error::Computation(msg.into())
    }
}
