use std::path::PathBuf;

use thiserror::Error;

use crate::train::Checkpoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },

    #[error("unknown behaviour label `{0}`")]
    UnknownBehaviour(String),

    #[error("invalid annotation: {0}")]
    Validation(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("missing frame {frame} of video `{video_id}`: {message}")]
    MissingFrame {
        video_id: String,
        frame: u32,
        message: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged {
        epoch: usize,
        last_good: Option<Box<Checkpoint>>,
    },

    #[error("no qualifying samples: {0}")]
    EmptyEvaluation(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Xml { .. } => "xml",
            Error::UnknownBehaviour(_) => "unknown-behaviour",
            Error::Validation(_) => "validation",
            Error::Contract(_) => "contract",
            Error::Config(_) => "config",
            Error::Image { .. } => "image",
            Error::MissingFrame { .. } => "missing-frame",
            Error::Checkpoint(_) => "checkpoint",
            Error::Diverged { .. } => "diverged",
            Error::EmptyEvaluation(_) => "empty-evaluation",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
