//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record or dataset violated a structural invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Parse failure in JSONL/CSV ingestion, with the 1-based line number.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A statistic is undefined on the given data (e.g. constant routing
    /// feature makes the tertile cuts collapse).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numerical routine failed to produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
