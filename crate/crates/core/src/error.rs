use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("measure has empty support")]
    EmptySupport,
    #[error("cube has zero mass")]
    EmptyCube,
    #[error("cube family is empty")]
    EmptyFamily,
    #[error("inner cube is not contained in outer cube")]
    NotNested,
    #[error("point {0} is not a support point")]
    NotInSupport(usize),
    #[error("cube side {side} is below the resolution scale {r_min}")]
    BelowResolution { side: f64, r_min: f64 },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("coincident points")]
    CoincidentPoints,
    #[error("norm of the test function is zero but the pairing is not")]
    ZeroNorm,
    #[error("companion {0} has no admissible support")]
    DegenerateCompanion(usize),
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("certificate failed: {0}")]
    Certificate(String),
    #[error("io: {0}")]
    Io(String),
    #[error("json: {0}")]
    Json(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
