use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    #[error("unsupported resize: {from_h}x{from_w} -> {to_h}x{to_w} (only upscaling is supported)")]
    UnsupportedResize {
        from_h: usize,
        from_w: usize,
        to_h: usize,
        to_w: usize,
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("category {0} is empty or does not exist")]
    EmptyCategory(usize),

    #[error("invalid selection: {0}")]
    InvalidSelection(String),

    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),

    #[error("trajectory exhausted: step {step} with {total} total steps")]
    TrajectoryExhausted { step: usize, total: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid step {step}: schedule covers [0, {total})")]
    InvalidStep { step: usize, total: usize },

    #[error("latent not final: step {step} of {total}")]
    NotFinal { step: usize, total: usize },

    #[error("invalid window [{start}, {end}) over {available} recorded steps")]
    InvalidWindow {
        start: usize,
        end: usize,
        available: usize,
    },

    #[error("token {token} out of range ({count} tokens)")]
    InvalidToken { token: usize, count: usize },

    #[error("degenerate map: {0}")]
    DegenerateMap(String),

    #[error("empty sample set")]
    EmptySample,

    #[error("degenerate feature: {0}")]
    DegenerateFeature(String),

    #[error("missing pair for sample id {0}")]
    MissingPair(String),

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures caused by numerically degenerate data rather than
    /// malformed configuration or I/O.
    pub fn is_numeric_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::DegenerateDirection(_)
                | Error::DegenerateMap(_)
                | Error::DegenerateFeature(_)
                | Error::InvalidMatrix(_)
                | Error::EmptySample
                | Error::EmptyCategory(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
