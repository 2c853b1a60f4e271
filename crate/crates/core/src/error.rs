use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    /// A structured input file failed to parse.
    #[error("{what}, line {line}: {msg}")]
    Format {
        what: &'static str,
        line: usize,
        msg: String,
    },

    /// Configuration rejected at load time. `path` locates the offending
    /// entry inside the document (for example `zones[3].city`).
    #[error("configuration error at {path}: {msg}")]
    Config { path: String, msg: String },

    #[error("invalid trace for participant {participant}: {reason}")]
    InvalidTrace { participant: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input or configuration rather
    /// than a failure during execution.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Format { .. }
                | Error::Csv(_)
                | Error::InvalidTrace { .. }
                | Error::InvalidInput(_)
        )
    }
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
