use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Input does not parse under its declared format. `locator` names a line
    /// or an element.
    #[error("format error at {locator}: {message}")]
    Format { locator: String, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot tokenize word {word:?}: {reason}")]
    Tokenization { word: String, reason: String },

    #[error("aspect of instance {instance_id} does not fit in {max_len} subwords")]
    AspectTruncated { instance_id: String, max_len: usize },

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (loss = {loss})")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("refused: {0}")]
    Refused(String),

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

    pub(crate) fn format(locator: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            locator: locator.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input, arguments or configuration rather
    /// than a failure while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Format { .. }
                | Error::Argument(_)
                | Error::Config(_)
                | Error::Refused(_)
                | Error::Json(_)
        )
    }
}
