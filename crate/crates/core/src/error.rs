use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent hyperparameters or layer wiring.
    #[error("configuration error: {0}")]
    Config(String),

    /// Bad user input: shapes, non-finite values, empty batches.
    #[error("validation error: {0}")]
    Validation(String),

    /// A non-finite value appeared inside a forward or reverse sweep.
    #[error("numerical error at layer {layer}: {message}")]
    Numerical { layer: usize, message: String },

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
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
