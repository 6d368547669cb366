//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by frame construction, losses, sampling, and training.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs whose shapes or lengths do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation that requires at least one sample got none.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// A serialized frame or checkpoint that cannot be decoded.
    #[error("malformed file: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
