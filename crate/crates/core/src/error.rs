use std::path::PathBuf;

use thiserror::Error;

use crate::llm::GatewayError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the geometry, synthesis, feature and statistics layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("insufficient data: need at least {required}, got {available}")]
    InsufficientData { required: usize, available: usize },

    #[error("serialization error: {0}")]
    Serde(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage dependency error: {0}")]
    StageOrder(String),

    #[error(transparent)]
    Provider(#[from] GatewayError),

    #[error("metrics file error: {0}")]
    Metrics(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::StageOrder(_) => 3,
            Error::Provider(_) => 4,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
