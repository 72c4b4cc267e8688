use thiserror::Error;

/// Errors raised by the structured algebra, basis construction and GP layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GriefError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for dimension {dim} of size {size}")]
    IndexOutOfRange { dim: usize, index: usize, size: usize },

    #[error("numerical overflow: non-finite value at row {row}, column {col}")]
    NumericalOverflow { row: usize, col: usize },

    #[error("requested {requested} entries but only {available} exist")]
    TooManyRequested { requested: usize, available: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigendecomposition failed for dimension {dim}")]
    EigenFailure { dim: usize },

    #[error("matrix is not positive definite ({0}); try jitter or smaller weights")]
    NotPositiveDefinite(String),

    #[error("basis has numerical rank zero")]
    RankZero,

    #[error("sufficient statistics are not orthogonalized")]
    NotOrthogonal,
}

pub type Result<T, E = GriefError> = std::result::Result<T, E>;
