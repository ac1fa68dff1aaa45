use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} units, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("unsupported format version {0}")]
    Version(u32),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("rank-deficient input (smallest |R_ii| = {0:e})")]
    RankDeficient(f64),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, trace: Vec<f64> },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
