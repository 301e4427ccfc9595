use crate::model::Model;

/// Crate-wide error type.
///
/// `InvalidArgument`, `Parse`, `Format`, `Io`, `EmptyInput` and
/// `EnumerationGuard` are configuration/input problems (CLI exit code 2);
/// `Numerical` and `Diverged` are runtime numerical failures (exit code 3).
#[derive(Debug)]
pub enum Error {
    /// A parameter or combination of parameters is out of range.
    InvalidArgument(String),
    /// A text input could not be parsed; `line` is 1-based.
    Parse { line: usize, message: String },
    /// A binary artifact has a bad magic, version or layout.
    Format(String),
    /// An operation that needs data received none.
    EmptyInput(String),
    /// A brute-force enumeration was requested above its size guard.
    EnumerationGuard { m: usize, limit: usize },
    /// An iterative routine failed to produce a usable result.
    Numerical(String),
    /// Training produced a non-finite loss; carries the last finite model.
    Diverged { epoch: usize, checkpoint: Box<Model> },
    Io(std::io::Error),
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {}", msg),
            Error::Parse { line, message } => write!(f, "parse error at line {}: {}", line, message),
            Error::Format(msg) => write!(f, "format error: {}", msg),
            Error::EmptyInput(msg) => write!(f, "empty input: {}", msg),
            Error::EnumerationGuard { m, limit } => {
                write!(f, "enumeration over {} labels exceeds the guard of {}", m, limit)
            }
            Error::Numerical(msg) => write!(f, "numerical failure: {}", msg),
            Error::Diverged { epoch, .. } => {
                write!(f, "training diverged at epoch {} (non-finite loss)", epoch)
            }
            Error::Io(e) => write!(f, "io error: {}", e),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for configuration/input errors, false for numerical failures.
    pub fn is_config(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::Diverged { .. })
    }
}
