use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    /// A config or schedule document failed validation at `path`.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] fairqueue_core::Error),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// 0 ok, 2 config error, 3 I/O error, 4 numeric degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Schema { .. } => 2,
            Self::Io { .. } | Self::Format { .. } => 3,
            Self::Core(e) if e.is_io() => 3,
            Self::Core(e) if e.is_numeric_degeneracy() => 4,
            Self::Core(_) => 2,
        }
    }
}
