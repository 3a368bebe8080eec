use thiserror::Error;

/// Errors produced by tensor algebra, factorization, and recognition routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("rank {rank} out of range for mode {mode} (allowed 1..={max})")]
    RankOutOfRange { mode: usize, rank: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("SVD failed to converge on mode {mode}")]
    SvdFailed { mode: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
