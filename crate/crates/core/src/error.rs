use thiserror::Error;

use crate::nsbox::BoxViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("variable sets overlap on `{0}`")]
    OverlappingVariables(String),

    #[error("table with {entries} entries exceeds the cap of {cap}")]
    TableTooLarge { entries: usize, cap: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("invalid box: {0}")]
    InvalidBox(BoxViolation),

    #[error("binary parametrization violated at (x, y) = ({x}, {y}): {reason}")]
    BinaryParams { x: usize, y: usize, reason: String },

    #[error("box must have binary inputs and outputs, got {0}")]
    NotBinary(String),

    #[error("perturbation leaves the simplex; the largest admissible epsilon is {max_epsilon:e}")]
    PerturbationLeavesSimplex { max_epsilon: f64 },

    #[error("wiring uses {n} boxes but the enumeration cap is {cap}")]
    TooManyBoxes { n: usize, cap: usize },

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("invalid wiring: {0}")]
    InvalidWiring(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<BoxViolation> for Error {
    fn from(v: BoxViolation) -> Self {
        Error::InvalidBox(v)
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
