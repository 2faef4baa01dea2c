use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is ill-conditioned (smallest eigenvalue {min_eigenvalue:e} below {floor:e})")]
    IllConditioned { min_eigenvalue: f64, floor: f64 },

    #[error("conditioning set covers every coordinate; the complement is empty")]
    EmptyComplement,

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("AMP diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("state-evolution fixed point not reached after {iterations} iterations")]
    FixedPoint { iterations: usize, trace: Vec<f64> },

    #[error("root bracket not found: {message}")]
    Bracket {
        message: String,
        evaluations: Vec<(f64, f64)>,
    },

    #[error("logistic fit failed: {0}")]
    Fit(String),

    #[error("too many failed replicates ({failed} of {total})")]
    ReplicateFailures { failed: usize, total: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
