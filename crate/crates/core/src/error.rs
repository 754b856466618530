use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coordinate {index} out of range for dimension {n}")]
    CoordinateOutOfRange { index: usize, n: usize },

    #[error("invalid probability {0}: must be a finite value in [0, 1]")]
    InvalidProbability(f64),

    #[error("correlation parameter rho = {0} outside its admissible range")]
    RhoOutOfRange(f64),

    #[error("operation requires a truth-table backed function")]
    TruthTableRequired,

    #[error("dimension {n} exceeds the supported maximum of {max}")]
    TooLarge { n: usize, max: usize },

    #[error("norm order {0} must be at least 1")]
    InvalidOrder(f64),

    #[error("finite-difference step {h} moves p[{index}] = {p} outside (0, 1)")]
    StepOutOfRange { index: usize, p: f64, h: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
