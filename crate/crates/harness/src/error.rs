use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: blob length mismatch, expected {expected} bytes, found {actual}")]
    BlobLength {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("{path}: unsupported checkpoint version {found} (expected {expected})")]
    Version { path: PathBuf, found: u32, expected: u32 },
    #[error(transparent)]
    Model(#[from] hebm_core::Error),
}

impl HarnessError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    pub fn parse(path: &Path, message: impl Into<String>) -> Self {
        HarnessError::Parse {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    /// Process exit code: 1 for usage errors, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
