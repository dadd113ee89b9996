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

    #[error("{path}:{line}: {reason}")]
    Record {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("unknown pool `{0}`")]
    UnknownPool(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("graph is not connected ({components} components)")]
    Disconnected { components: usize },

    #[error("empty vocabulary after pruning features below count {min_count}")]
    EmptyVocabulary { min_count: usize },

    #[error("training diverged at epoch {epoch} (graph {graph}): loss = {loss}")]
    Diverged { epoch: usize, graph: usize, loss: f64 },

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("missing upstream artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from bad user input or configuration rather
    /// than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidInput(_)
                | Error::Record { .. }
                | Error::UnknownPool(_)
                | Error::MissingArtifact(_)
        )
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
