use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CiamsError>;

#[derive(Debug, Error)]
pub enum CiamsError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("empty file")]
    EmptyFile,
    #[error("not binary: found {0} distinct label symbols")]
    NotBinary(usize),
    #[error("non-numeric cell in column '{column}' at row {row}")]
    NonNumericCell { column: String, row: usize },
    #[error("label column '{0}' not found")]
    MissingLabelColumn(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("class too small to stratify: {0}")]
    ClassTooSmall(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("rank deficient covariance")]
    RankDeficient,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("unsupported version {0}")]
    UnsupportedVersion(String),
    #[error("checksum failure")]
    ChecksumFailure,
    #[error("truncated file")]
    Truncated,
    #[error("malformed bundle: {0}")]
    MalformedBundle(String),
    #[error("clustering failed: {0}")]
    MethodFailure(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Internal(String),
}

impl CiamsError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CiamsError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a bug or an
    /// environment failure. Drives the CLI exit code and HTTP status.
    pub fn is_validation(&self) -> bool {
        !matches!(self, CiamsError::Io { .. } | CiamsError::Internal(_))
    }
}
