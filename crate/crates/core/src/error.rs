use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A dimension that must be a power of two (or otherwise sized) is not.
    #[error("sizing error: {0}")]
    Sizing(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {kind} data: {msg}")]
    Format { kind: &'static str, msg: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 validation, 2 IO, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Sizing(_) | Error::Shape(_) | Error::Param(_) | Error::Config(_) => 1,
            Error::Io { .. } | Error::Format { .. } => 2,
            Error::Numerical(_) => 3,
        }
    }
}
