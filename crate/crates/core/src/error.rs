use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("particle weights degenerate at t = {t} (log total weight {log_total})")]
    DegenerateWeights { t: usize, log_total: f64 },

    #[error("simplex QP not converged after {iterations} iterations (KKT residual {residual:e})")]
    QpNotConverged {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },
}

impl Error {
    /// True for errors caused by the caller's inputs rather than by the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::DimensionMismatch { .. } | Error::InvalidArgument(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
