use thiserror::Error;

/// Errors produced by the catalytic prior library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("rank-deficient system: rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// The Newton system could not be factorized. Carries the last iterate so
    /// callers that tolerate failure (e.g. flat-prior replications) can keep it.
    #[error("singular Newton system at iteration {iteration}")]
    SingularNewton { iteration: usize, beta: Vec<f64> },

    #[error("degenerate response: {0}")]
    DegenerateResponse(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize, last: Vec<f64> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
