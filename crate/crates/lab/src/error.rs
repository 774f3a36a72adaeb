use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    /// Invalid configuration; `path` names the offending key.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        LabError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 config, 2 numeric or resource, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config { .. } => 1,
            LabError::Numeric(_) => 2,
            LabError::Io { .. } => 3,
        }
    }
}
