use std::path::PathBuf;

use thiserror::Error;

use crate::cascade::EngagementLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes used by the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Usage = 1,
    Data = 2,
    Numeric = 3,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{path}: line {line}: {source}")]
    Line { path: PathBuf, line: usize, source: Box<Error> },

    #[error("unknown {kind} value {value:?}")]
    UnknownEnum { kind: &'static str, value: String },

    #[error("duplicate record key (lecture {lecture_id}, subject {subject_id}, frame {frame_index})")]
    DuplicateKey { lecture_id: u32, subject_id: String, frame_index: u64 },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("class {class} has {available} items but {requested} were requested")]
    InsufficientClass { class: EngagementLabel, requested: usize, available: usize },

    #[error("requested {requested} items from a pool of {available}")]
    InsufficientPool { requested: usize, available: usize },

    #[error("unknown subject {0:?}")]
    UnknownSubject(String),

    #[error("missing crop for {0}")]
    MissingCrop(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Error::Usage(_) | Error::Config(_) => ExitCode::Usage,
            Error::Numeric(_) => ExitCode::Numeric,
            _ => ExitCode::Data,
        }
    }
}
