use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file or record failed validation while loading.
    #[error("load error in {context}: {message}")]
    Load { context: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("judge error: {0}")]
    Judge(String),

    /// Transport failures that survived all retries.
    #[error("transport error: {0}")]
    Transport(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}, parameter norm {param_norm}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        loss: f64,
        param_norm: f64,
    },

    #[error("stage `{stage}` failed (artifact {path}): {source}")]
    Stage {
        stage: String,
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Load {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn arg(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
