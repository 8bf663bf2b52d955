use thiserror::Error;

/// Errors produced by the estimation and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    Dimension {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("numerical degeneracy: {0}")]
    Degeneracy(String),

    #[error("parameter divergence: |theta| = {theta_norm:.3} exceeded the bound {bound}")]
    Divergence { theta_norm: f64, bound: f64 },

    #[error(
        "information matrix is singular or not positive definite \
         (smallest eigenvalue {min_eigenvalue:.3e}); beta may be near zero"
    )]
    SingularInformation { min_eigenvalue: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
