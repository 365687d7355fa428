use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A Cholesky factorization failed on a matrix that must be SPD.
    #[error("matrix `{0}` is not symmetric positive definite")]
    NonSpd(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The Sylvester operator `X A + A Y` is numerically singular.
    #[error("Sylvester equation is singular (spectra of X and -Y overlap)")]
    SingularSylvester,

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    SymmetryViolation(f64),

    /// Inner splitting objective kept increasing; the caller falls back to
    /// the proximal-gradient solver.
    #[error("inner solver made no progress for {0} consecutive iterations")]
    NoProgress(usize),

    #[error("iteration limit of {0} reached before convergence")]
    MaxIterExceeded(usize),

    #[error("loss increased from {before} to {after} at outer iteration {iteration}")]
    DivergenceDetected {
        iteration: usize,
        before: f64,
        after: f64,
    },

    #[error("reference quantity has zero norm")]
    ZeroReference,

    #[error("ground truth has a single class; AUC is undefined")]
    DegenerateClass,

    #[error("reflector vector has near-zero norm")]
    DegeneratePVector,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors that come from a numerical failure rather than bad
    /// input or I/O.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NonSpd(_)
                | Error::SingularSylvester
                | Error::NoProgress(_)
                | Error::MaxIterExceeded(_)
                | Error::DivergenceDetected { .. }
                | Error::DegeneratePVector
        )
    }
}
