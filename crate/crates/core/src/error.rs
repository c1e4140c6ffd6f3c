use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Variants are grouped into the categories reported by the command-line
/// driver through [`Error::category`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("degenerate input in {op}: row {row} has norm below 1e-12")]
    Degenerate { op: &'static str, row: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    /// Embeddings went non-finite or collapsed to zero during training.
    #[error("training diverged at epoch {epoch}, batch {batch}: {reason}")]
    Diverged { epoch: usize, batch: usize, reason: &'static str },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("shape mismatch: {what} is {found} in the file but {expected} was expected")]
    ShapeMismatch {
        what: &'static str,
        found: usize,
        expected: usize,
    },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: u64, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Coarse error classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Numeric,
}

impl Category {
    pub fn exit_code(self) -> u8 {
        match self {
            Category::Config => 2,
            Category::Data => 3,
            Category::Numeric => 4,
        }
    }
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Config(_) | Error::Range(_) | Error::Contract(_) => Category::Config,
            Error::Numeric(_) | Error::NonFiniteLoss { .. } | Error::Diverged { .. } => Category::Numeric,
            Error::Shape { .. }
            | Error::ShapeMismatch { .. }
            | Error::Degenerate { .. }
            | Error::Label { .. }
            | Error::Io { .. }
            | Error::Malformed { .. }
            | Error::Parse { .. }
            | Error::EmptyDataset
            | Error::Protocol(_) => Category::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
