use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// Variants are grouped by the stage that raises them so the command-line
/// front end can map them onto exit codes (`data`, `training`, `usage`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: schema violation in field \"{field}\": {reason}")]
    Schema {
        line: usize,
        field: String,
        reason: String,
    },

    #[error("duplicate commit id \"{0}\"")]
    DuplicateCommit(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("{0} split is empty")]
    EmptySplit(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("single-class input: {0}")]
    SingleClass(String),

    #[error("class {class} has {count} members, fewer than k = {k}")]
    TooFewPerClass { class: u8, count: usize, k: usize },

    #[error("input is not sorted by (timestamp, commit_id) at commit \"{0}\"")]
    Unsorted(String),

    #[error("commit \"{0}\" has no file changes")]
    NoFiles(String),

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("token id {id} out of vocabulary range {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("logistic regression did not converge; final gradient norm {grad_norm:e}")]
    NonConvergence { grad_norm: f64 },

    #[error("training failed at epoch {epoch}, batch {batch}: {reason}")]
    Training {
        epoch: usize,
        batch: usize,
        reason: String,
    },

    #[error("all paired differences are zero")]
    AllZeroDifferences,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown tag \"{0}\"")]
    UnknownTag(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed {kind}: {reason}")]
    Format { kind: &'static str, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            kind,
            reason: reason.into(),
        }
    }

    pub(crate) fn dim(expected: usize, got: usize, context: impl Into<String>) -> Self {
        Error::Dimension {
            expected,
            got,
            context: context.into(),
        }
    }

    /// Coarse classification used by the CLI for exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Stage { source, .. } => source.kind(),
            Error::InvalidArgument(_) | Error::UnknownTag(_) => ErrorKind::Usage,
            Error::NonConvergence { .. } | Error::Training { .. } | Error::NonFinite(_) => {
                ErrorKind::Training
            }
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Training,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
