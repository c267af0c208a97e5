use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violates a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The input lies outside the domain of the operation (coincident points,
    /// projection pole, non-positive curvature, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A discretization is too coarse for the requested accuracy.
    #[error("under-resolved: {message} (required order {required})")]
    Resolution { message: String, required: usize },

    /// A request would exceed the memory budget.
    #[error("resource limit: {message} (needs ~{required_bytes} bytes)")]
    Resource { message: String, required_bytes: u64 },

    /// An iterative method failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The prescribed function has degenerate critical points.
    #[error("degenerate critical structure: {0}")]
    Degenerate(String),

    /// A linearization is singular within tolerance.
    #[error("singular Jacobian (bifurcation suspected): {0}")]
    Singular(String),

    /// Text input could not be parsed.
    #[error("parse error at column {column}: {message}")]
    Parse { message: String, column: usize },

    /// Serialized data is malformed.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
