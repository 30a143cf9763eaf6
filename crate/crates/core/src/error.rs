use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Input too small (or otherwise degenerate) for the requested operation.
    DegenerateInput(String),
    ShapeMismatch(String),
    NumericalError(String),
    MissingTensor(String),
    BadShape(String),
    EncodingError(String),
    DecodingError(String),
    PreconditionViolation(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DegenerateInput(m) => write!(f, "degenerate input: {m}"),
            Error::ShapeMismatch(m) => write!(f, "shape mismatch: {m}"),
            Error::NumericalError(m) => write!(f, "numerical error: {m}"),
            Error::MissingTensor(name) => write!(f, "missing tensor {name:?}"),
            Error::BadShape(m) => write!(f, "bad tensor shape: {m}"),
            Error::EncodingError(m) => write!(f, "encoding error: {m}"),
            Error::DecodingError(m) => write!(f, "decoding error: {m}"),
            Error::PreconditionViolation(m) => write!(f, "precondition violated: {m}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::Error::ShapeMismatch(alloc::format!($($arg)*)) };
}
pub(crate) use shape_err;
