use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signature (p={p}, q={q}, r={r}, d={d}): block size floor(d/(1+p+q+r)) is zero")]
    InvalidSignature { p: usize, q: usize, r: usize, d: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("oracle supports at most 10 generators, got {0}")]
    OracleScaleExceeded(usize),

    #[error("{kind} id {id} out of range (size {size})")]
    IdOutOfRange { kind: &'static str, id: usize, size: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite gradient encountered")]
    NonFiniteGradient,

    #[error("training set is empty")]
    EmptyTrainSet,

    #[error("true answer {0} is not in its own filter set")]
    TrueTailMissing(usize),

    #[error("split {0} is empty")]
    EmptySplit(&'static str),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}:{line}: malformed line: {reason}", path.display())]
    MalformedLine { path: PathBuf, line: usize, reason: String },

    #[error("expected signature {expected}, model has {actual}")]
    SignatureMismatch { expected: String, actual: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error comes from bad input data or files rather than
    /// from arguments or numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::EmptyTrainSet
                | Error::EmptySplit(_)
                | Error::MissingFile(_)
                | Error::MalformedLine { .. }
                | Error::ModelFormat(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::TrueTailMissing(_)
                | Error::IdOutOfRange { .. }
        )
    }

    pub fn is_numeric_error(&self) -> bool {
        matches!(self, Error::NonFiniteGradient)
    }
}
