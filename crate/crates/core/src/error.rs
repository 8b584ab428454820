use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("division by zero")]
    DivisionByZero,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("field mismatch: {0}")]
    FieldMismatch(String),
    #[error("bangle layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("witness diagonal block {0} is singular")]
    SingularBlock(usize),
    #[error("regular part is singular")]
    SingularRegularPart,
    #[error("no convergence at tolerance {tol:e}: {reason}")]
    NonConvergence { tol: f64, reason: String },
    #[error("not a 0/1 bangle: {0}")]
    NotZeroOne(String),
    #[error("ill-conditioned eigenstructure: {0}")]
    IllConditioned(String),
    #[error("input matrix is singular")]
    SingularInput,
    #[error("cosquare eigenvalues could not be paired: {0}")]
    UnpairedEigenvalues(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

impl Error {
    /// Numerical failures get their own exit status in the CLI.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::IllConditioned(_) | Error::UnpairedEigenvalues(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
