use gmrf::GmrfError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, InlaError>;

#[derive(Debug, Error)]
pub enum InlaError {
    #[error(transparent)]
    Gmrf(#[from] GmrfError),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("hyperparameter slot mismatch: model declares {expected} slots, got {found}")]
    SlotMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The mode search stopped without meeting the gradient tolerance.
    /// `trajectory` holds the iterates visited, oldest first.
    #[error("mode search did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64, trajectory: Vec<Vec<f64>> },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl InlaError {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            InlaError::Gmrf(GmrfError::NotPositiveDefinite { .. })
                | InlaError::NonConvergence { .. }
                | InlaError::Numerical(_)
        )
    }
}
