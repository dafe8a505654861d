use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A chord label that could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse chord {input:?}: {message} at position {position} (token {token:?})")]
pub struct ChordParseError {
    pub input: String,
    pub position: usize,
    pub token: String,
    pub message: &'static str,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    ChordParse(#[from] ChordParseError),

    #[error("chord class id {0} is outside the vocabulary")]
    ClassOutOfRange(usize),

    #[error("{what} is empty")]
    Empty { what: &'static str },

    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },

    #[error("audio has {got} samples, shorter than the {needed}-sample analysis window")]
    AudioTooShort { needed: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Annotation {
        path: String,
        line: usize,
        message: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid alignment path: {0}")]
    InvalidPath(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav {}: {source}", path.display())]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("json {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Process exit code: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 1,
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
