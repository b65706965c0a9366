use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. `Display` output is machine-parsable as
/// `<category>: <detail>`; the CLI prefixes it with `error: `.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),

    #[error("input: {0}")]
    Input(String),

    #[error("decode: {path}: {detail}")]
    Decode { path: PathBuf, detail: String },

    #[error("format: {0}")]
    Format(String),

    #[error("corrupt: {detail} at byte offset {offset}")]
    Corrupt { offset: u64, detail: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("numeric: {0}")]
    Numeric(String),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Usage(_) => "usage",
            Error::Input(_) => "input",
            Error::Decode { .. } => "decode",
            Error::Format(_) => "format",
            Error::Corrupt { .. } => "corrupt",
            Error::Io(_) => "io",
            Error::Numeric(_) => "numeric",
        }
    }

    /// Process exit code: 1 usage, 2 data/format, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
