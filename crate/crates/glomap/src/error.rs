//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at data row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("row {0} has no finite neighbors to sample from")]
    IsolatedRow(usize),

    #[error("local scale is zero at point {i} but edge ({i},{j}) has nonzero length")]
    ZeroScale { i: usize, j: usize },

    #[error("{0}")]
    Metric(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
