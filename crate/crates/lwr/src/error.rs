use std::io;
use std::path::PathBuf;

pub type Result<T, E = LwrError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum LwrError {
    #[error(transparent)]
    Core(#[from] lwr_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{0}")]
    Usage(String),

    #[error("server: {0}")]
    Server(String),
}

impl LwrError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        LwrError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        LwrError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status: 1 for usage problems, 2 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            LwrError::Usage(_) => 1,
            _ => 2,
        }
    }
}
