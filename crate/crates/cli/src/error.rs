use dimaq::DimaqError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, configuration or missing files.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Dimaq(#[from] DimaqError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    /// Input validation reported problems (already printed).
    #[error("{0} input findings")]
    Findings(usize),
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// `2` for numerical failures, `1` for everything caused by the inputs
    /// or the configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Dimaq(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}
