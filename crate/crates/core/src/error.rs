use gmrf::GmrfError;
use inla::InlaError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, DimaqError>;

#[derive(Debug, Error)]
pub enum DimaqError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A malformed input row; `line` is 1-based and counts the header.
    #[error("{path}:{line}: {field}: {message}")]
    Input { path: String, line: u64, field: String, message: String },

    #[error("invalid hierarchy: {0}")]
    Hierarchy(String),

    /// Ids that could not be resolved against the hierarchy or the cell table.
    #[error("unresolved {kind}: {}", .ids.join(", "))]
    Unresolved { kind: String, ids: Vec<String> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("collinear design columns: {}", .columns.join(", "))]
    Collinear { columns: Vec<String> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Inla(#[from] InlaError),

    #[error(transparent)]
    Gmrf(#[from] GmrfError),
}

impl DimaqError {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            DimaqError::Inla(e) => e.is_numerical(),
            DimaqError::Gmrf(GmrfError::NotPositiveDefinite { .. }) => true,
            _ => false,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        DimaqError::Io { path: path.display().to_string(), source }
    }
}
