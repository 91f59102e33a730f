use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index error: interval ({i}, {j}] is not valid for n = {n}")]
    Index { i: usize, j: usize, n: usize },

    #[error("resolution mismatch: grid has n_ref = {grid}, data has n = {data}")]
    ResolutionMismatch { grid: usize, data: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("empty candidate set: {0}")]
    EmptyCandidates(String),

    #[error("critical value table has no quantile for alpha = {0}")]
    MissingAlpha(f64),

    #[error("bracket failure: {0}")]
    BracketFailure(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("cache validation failed: {0}")]
    Cache(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
