use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A manifest or hypothesis line could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Well-formed input that violates a data invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The two tokenizations disagree on the number of words.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("audio format error: {0}")]
    Format(String),

    #[error("numeric error in `{tensor}`: {message}")]
    Numeric { tensor: String, message: String },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Input(_)
                | Error::Alignment(_)
                | Error::Format(_)
                | Error::Config(_)
                | Error::Json(_)
        )
    }
}
