use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: tercet block does not have exactly three lines (found {found})")]
    BlockNotThreeLines { line: usize, found: usize },

    #[error("line {line}: verse is empty after normalization")]
    EmptyVerse { line: usize },

    #[error("cannot split {count} items into train/val/test (need at least 3)")]
    DegenerateSplit { count: usize },

    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    InvalidFractions([f64; 3]),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("sequence of length {len} has no prediction step")]
    DegenerateSequence { len: usize },

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },

    #[error("non-finite loss in stage `{stage}` at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        stage: String,
        epoch: usize,
        batch: usize,
    },

    #[error("malformed vocabulary file: {0}")]
    VocabFormat(String),

    #[error("malformed exception lexicon at line {line}: {reason}")]
    ExceptionFormat { line: usize, reason: String },

    #[error("malformed checkpoint: {0}")]
    CheckpointFormat(String),

    #[error("checkpoint dimensions {found:?} do not match expected {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },

    #[error(
        "checkpoint was trained with a different vocabulary (hash {found}, expected {expected})"
    )]
    VocabMismatch { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors raised by numeric divergence during training.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::NonFiniteLoss { .. })
    }
}
