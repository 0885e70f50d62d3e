use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or network shapes do not line up. Always a configuration bug.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A loss, gradient or density went non-finite during a training step.
    #[error("non-finite {what} at training step {batch}")]
    NonFinite { what: String, batch: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error in {context}: {msg}")]
    Parse { context: String, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            msg: msg.into(),
        }
    }
}
