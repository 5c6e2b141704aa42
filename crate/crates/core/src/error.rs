use std::path::PathBuf;

/// Errors produced anywhere in the library.
///
/// Variants are split so callers (and the CLI exit code) can tell a bad
/// input apart from a numerical or IO failure at run time.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("anomaly solve did not converge after {iterations} iterations (residual {residual:e})")]
    Kepler { iterations: usize, residual: f64 },

    #[error("dynamics singularity: {0}")]
    Singularity(String),

    #[error("non-finite value at t = {t} s: {what}")]
    NonFinite { t: f64, what: String },

    #[error("convex subproblem infeasible: terminal residual {residual:?} km exceeds reachable set on axes {axes:?}")]
    Infeasible { residual: [f64; 3], axes: Vec<usize> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("corrupt or unsupported file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("training diverged at epoch {epoch} (loss {loss:e})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True when the error stems from caller-supplied parameters rather than
    /// a failure during computation.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidInput(_) | Error::Dimension { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
