use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),

    /// Nothing left to score, e.g. a label map whose pixels are all ignored.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A forward cache that does not belong to the parameters or gradient it is used with.
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad data or the filesystem rather than by a
    /// broken internal invariant.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::InvalidState(_))
    }
}
