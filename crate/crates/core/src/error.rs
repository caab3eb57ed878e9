use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Variants are grouped so a front end can map them onto exit codes:
/// configuration problems, data/format problems and numerical failures.
#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ProbeError {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        ProbeError::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ProbeError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        ProbeError::Format {
            offset,
            message: message.into(),
        }
    }

    /// Broad category used by front ends for exit-code mapping.
    pub fn kind(&self) -> ErrorKind {
        match self {
            ProbeError::Config(_) | ProbeError::State(_) => ErrorKind::User,
            ProbeError::Divergence(_) => ErrorKind::Numerical,
            ProbeError::Dimension { .. }
            | ProbeError::EmptyInput(_)
            | ProbeError::InvalidRecord(_)
            | ProbeError::Data(_)
            | ProbeError::Format { .. }
            | ProbeError::Io { .. } => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    User,
    Data,
    Numerical,
}

pub type Result<T> = std::result::Result<T, ProbeError>;
