use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    InvalidInput(String),

    #[error("{0}")]
    Format(String),

    #[error("no samples")]
    NoSamples,

    #[error("no foreground")]
    NoForeground,

    #[error("degenerate patches: total variance {0:e} is not above 1e-12")]
    DegeneratePatches(f64),

    #[error("between-class scatter undefined: only one class present")]
    SingleClass,

    #[error("layer {layer}: {message}")]
    Shape { layer: usize, message: String },

    #[error("missing forward cache for layer {0}")]
    MissingCache(usize),

    #[error("loss became NaN at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("{0}")]
    Checkpoint(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Stable short name used by the CLI error line and the C error codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::InvalidInput(_) => "invalid_input",
            Error::Format(_) => "format",
            Error::NoSamples => "no_samples",
            Error::NoForeground => "no_foreground",
            Error::DegeneratePatches(_) => "degenerate_patches",
            Error::SingleClass => "single_class",
            Error::Shape { .. } => "shape",
            Error::MissingCache(_) => "missing_cache",
            Error::Diverged { .. } => "diverged",
            Error::Checkpoint(_) => "checkpoint",
            Error::Json(_) => "json",
        }
    }
}
