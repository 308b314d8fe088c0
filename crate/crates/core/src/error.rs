use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the workbench can report.
///
/// Variants are grouped by kind so front ends can map them to exit codes
/// with [`Error::kind`].
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("packet {index}: truncated {layer} header (need {needed} bytes, have {available})")]
    Truncated { index: usize, layer: &'static str, needed: usize, available: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("file name {name:?} does not follow SOURCE_TRAFFIC[_PHASE]_DEVICE: {reason}")]
    Naming { name: String, reason: String },

    #[error("{path}: row {row}: {message}")]
    Row { path: PathBuf, row: u64, message: String },

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Coarse error classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::Numeric(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    /// Attach a packet index to a truncation raised while parsing a single frame.
    pub(crate) fn at_packet(self, packet: usize) -> Self {
        match self {
            Error::Truncated { layer, needed, available, .. } => {
                Error::Truncated { index: packet, layer, needed, available }
            }
            other => other,
        }
    }
}
