use thiserror::Error;

/// Errors produced by the monitoring library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite: pivot {pivot:e} at row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("matrix is not symmetric within tolerance")]
    NotSymmetric,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("out-of-order observation: expected t={expected}, got t={got}")]
    OutOfOrder { expected: u64, got: u64 },

    #[error("undefined posterior quantity: {0}")]
    Undefined(&'static str),

    #[error("snapshot rejected: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;
