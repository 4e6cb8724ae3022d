use thiserror::Error;

/// Errors surfaced by samplers, oracles and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("root finder did not converge: {0}")]
    NonConvergence(String),

    #[error("all {0} paths were flagged invalid")]
    AllPathsInvalid(usize),

    #[error("estimate degenerate: {0}")]
    DegenerateEstimate(String),

    #[error("checkpoint architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("training aborted: {0}")]
    TrainingAborted(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
