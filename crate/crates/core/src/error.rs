use thiserror::Error;

/// Errors raised by the transport types and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OtError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("negative entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("empty vector or matrix")]
    Empty,

    #[error("marginal entry {index} is {value}; strictly positive marginals are required")]
    NonPositiveMarginal { index: usize, value: f64 },

    #[error("regularization parameter must be positive, got {0}")]
    NonPositiveEta(f64),

    #[error("problem size {n} exceeds the limit {max}")]
    TooLarge { n: usize, max: usize },

    #[error("marginals carry different total mass ({row} vs {col})")]
    InfeasibleMarginals { row: f64, col: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cost matrix is identically zero; every feasible plan is optimal")]
    TrivialInstance,

    #[error("iterates diverged at outer iteration {outer}, inner step {inner}: {what}")]
    Divergence {
        outer: usize,
        inner: usize,
        what: &'static str,
    },
}

pub type Result<T> = std::result::Result<T, OtError>;
