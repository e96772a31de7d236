use thiserror::Error;

pub type Result<T> = std::result::Result<T, GmrfError>;

#[derive(Debug, Error)]
pub enum GmrfError {
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    /// `index` is the row/column of the original (unpermuted) matrix at which
    /// the pivot became nonpositive.
    #[error("matrix is not positive definite: pivot {pivot:.3e} at index {index}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{path}: {message}")]
    Input { path: String, message: String },
}
