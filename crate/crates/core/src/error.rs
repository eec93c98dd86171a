use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate paper id {paper_id:?} at line {line}")]
    DuplicateId { paper_id: String, line: usize },

    #[error("year {year} out of range [1800, 2100] at line {line}")]
    YearOutOfRange { year: i32, line: usize },

    #[error("advisee and advisor are the same person ({name:?}) at line {line}")]
    SelfPair { name: String, line: usize },

    #[error("disambiguation did not reach a fixpoint within {passes} passes")]
    IterationLimitExceeded { passes: usize },

    #[error("scholars {a} and {b} never co-authored")]
    NoCollaboration { a: usize, b: usize },

    #[error("scholar {0} has no collaborators")]
    NoCollaborators(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("sample ({advisee}, {candidate}) carries no label")]
    UnlabeledSample { advisee: usize, candidate: usize },

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("length mismatch: {predictions} predictions vs {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
