use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("input file not found: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("{}:{line}: malformed row: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}:{line}: {message}", path.display())]
    Validation {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("duplicate rating record for user `{user}` and item `{item}`")]
    DuplicateRating { user: String, item: String },

    #[error("self-loop friendship for user `{0}`")]
    SelfLoop(String),

    #[error("dataset is empty after preprocessing")]
    EmptyAfterPreprocessing,

    #[error("index out of range: {what} {index} (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "training diverged at iteration {iteration}: non-finite factors \
         (try a smaller learning_rate or clamp_closeness_nonnegative = true)"
    )]
    Divergence { iteration: usize },

    #[error("sample too small: need at least 2 observations per sample, got {n_a} and {n_b}")]
    SampleTooSmall { n_a: usize, n_b: usize },

    #[error("degenerate samples (both constant with equal means): hypothesis not rejectable")]
    DegenerateSample,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("cannot evaluate on an empty test set")]
    EmptyEvaluation,

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::NotFound {
            Error::MissingInput(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Process exit code: 2 for usage/configuration problems, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingInput(_) | Error::Config(_) | Error::InvalidSplit(_) => 2,
            _ => 1,
        }
    }
}
