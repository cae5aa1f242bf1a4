//! Error type shared by every module in the engine.

use std::fmt;

/// Errors produced by the selection engine.
///
/// The variants map onto the CLI exit-code contract: validation and I/O
/// problems exit 2, infeasible experiments exit 3, report-schema problems
/// exit 4.
#[derive(Debug)]
pub enum Error {
    /// Invalid argument or malformed input value.
    InvalidInput(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
    /// Dataset or checkpoint file does not match its binary format.
    Format(String),
    /// report.json version or structure mismatch.
    Schema(String),
    /// Experiment cannot proceed (e.g. budget exceeds the unlabeled pool).
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Schema(msg) => write!(f, "schema error: {msg}"),
            Error::Infeasible(msg) => write!(f, "infeasible: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

impl Error {
    /// Exit code for the CLI contract: 2 input, 3 infeasible, 4 schema.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Io(_) | Error::Format(_) => 2,
            Error::Infeasible(_) => 3,
            Error::Schema(_) => 4,
        }
    }
}
