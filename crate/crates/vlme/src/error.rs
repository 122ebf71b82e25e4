use std::io;
use std::path::PathBuf;

use crate::format::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },

    #[error("{}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Data {
        context: String,
        source: vlme_core::Error,
    },

    #[error(transparent)]
    Core(#[from] vlme_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("cannot write report: {0}")]
    Output(io::Error),

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn manifest(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Manifest {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn data(context: impl Into<String>, source: vlme_core::Error) -> Self {
        Error::Data {
            context: context.into(),
            source,
        }
    }

    /// 3 for failures to read or write files, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Output(_) => EXIT_IO,
            Error::Format {
                source: FormatError::Io(_),
                ..
            } => EXIT_IO,
            _ => EXIT_VALIDATION,
        }
    }
}
