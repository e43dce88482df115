use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::SentenceLabel;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// The cause is part of the message rather than the error chain, so it
    /// is not printed twice.
    #[error("I/O error on {path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("malformed input at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate labels: training data only contains {0} sentences")]
    DegenerateLabels(SentenceLabel),

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("dimension mismatch: model expects {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vocabulary hash mismatch: model was trained with {expected}, got {actual}")]
    VocabularyMismatch { expected: String, actual: String },

    #[error("sentence {doc_id}#{index} carries no label")]
    MissingLabel { doc_id: String, index: usize },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input data rather than the environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
