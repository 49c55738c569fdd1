use std::path::PathBuf;

/// Errors produced by the rate, planning and simulation routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The requested distortion is at or below the smallest achievable one.
    #[error("infeasible distortion {distortion}: must exceed the minimum feasible distortion {minimum}")]
    InfeasibleDistortion { distortion: f64, minimum: f64 },

    #[error("solver did not converge after {iterations} iterations (best residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("{}: row {row}: {message}", path.display())]
    Parse { path: PathBuf, row: usize, message: String },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
