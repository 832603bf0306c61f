use thiserror::Error;

/// Errors produced by sketch construction, application and the streaming structures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    /// A derived constant is not representable as a finite 64-bit float.
    #[error("overflow while deriving {what}: {detail}")]
    Overflow { what: &'static str, detail: String },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("structure too large: {0}")]
    TooLarge(String),

    /// The base sketch would be longer than storing the vector itself.
    #[error("degenerate base sketch: length {t} exceeds 64 * {m}")]
    DegenerateBaseSketch { t: usize, m: usize },

    #[error("invalid stream state: {0}")]
    StreamState(&'static str),

    #[error("empty input")]
    EmptyInput,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
