//! Error type shared across the library.

/// Errors reported by construction, validation, and numerical routines.
///
/// The variants are grouped by failure class so that callers (notably the
/// CLI) can map them onto stable exit codes without string matching.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument or configuration value violates a documented precondition
    /// (non-finite input, non-positive scale, empty level list, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two observation locations coincide, making the covariance matrix
    /// exactly singular by construction.
    #[error("duplicate observation locations at indices {first} and {second}")]
    DuplicateLocation { first: usize, second: usize },

    /// The covariance matrix failed Cholesky factorization even after the
    /// full ridge escalation ladder.
    #[error("covariance matrix numerically singular (ridge ladder exhausted at {max_ridge:e})")]
    SingularCovariance { max_ridge: f64 },

    /// A numerical routine produced an unusable result (overflow, NaN, loss
    /// of positivity beyond tolerance, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An observation location does not coincide with any grid point of the
    /// simulated path; values are never interpolated.
    #[error("observation location at index {index} is not a grid point of the path")]
    OffGridLocation { index: usize },

    /// Two gridded objects that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Stable process exit code for this failure class:
    /// 2 = invalid argument or configuration, 3 = numerical failure,
    /// 4 = duplicate observation locations, 5 = grid mismatch.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::SingularCovariance { .. } | Error::Numerical(_) => 3,
            Error::DuplicateLocation { .. } => 4,
            Error::OffGridLocation { .. } | Error::GridMismatch(_) => 5,
        }
    }
}
