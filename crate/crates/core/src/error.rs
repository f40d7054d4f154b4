use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied a value outside an operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A file or document does not match the expected layout. The message
    /// names the offending field.
    #[error("schema error in {context}: {message}")]
    Schema { context: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// No specular reference trajectory could be found, so MCD weights
    /// cannot be calibrated.
    #[error("no specular reference: {0}")]
    NoReference(String),

    /// Display names the path only; the OS error is the source.
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn schema(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
