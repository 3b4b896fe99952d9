use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive depth {0}")]
    NonPositiveDepth(f64),
    #[error("non-positive disparity {0}")]
    NonPositiveDisparity(f64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("no valid pixels left after masking")]
    EmptyMask,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("length mismatch: {0} parameters vs {1} gradients")]
    LengthMismatch(usize, usize),
    #[error("optimization diverged at iteration {iteration} (loss = {loss})")]
    Divergence { iteration: usize, loss: f64 },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("trajectory too short: no segment of {min_length} m exists (path length {path_length:.3} m)")]
    TooShort { min_length: f64, path_length: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: line {line}: rotation is not orthonormal (deviation {deviation:.3e})")]
    MalformedRotation {
        path: PathBuf,
        line: usize,
        deviation: f64,
    },
    #[error("{path}: unsupported format: {message}")]
    UnsupportedFormat { path: PathBuf, message: String },
    #[error("config: unknown key `{0}`")]
    UnknownKey(String),
    #[error("config: duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("config: invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::EmptyMask | Error::DegenerateGeometry(_)
        )
    }
}
