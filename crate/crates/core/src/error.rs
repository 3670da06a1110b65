use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid center set: {0}")]
    InvalidCenters(String),

    #[error("Gramian factorization failed for every jitter in the ladder (last tried {last_jitter:e})")]
    FactorizationFailure { last_jitter: f64 },

    #[error("functions are expanded over different center sets")]
    BasisMismatch,

    #[error("matrix is not Hurwitz (max real part of spectrum {max_real:e})")]
    NotHurwitz { max_real: f64 },

    #[error("Kronecker system for the Lyapunov equation is singular")]
    SolveFailure,

    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("invalid integration request: {0}")]
    InvalidIntegration(String),

    #[error("window exceeds trajectory: need t up to {needed}, trajectory ends at {available}")]
    WindowExceedsTrajectory { needed: f64, available: f64 },

    #[error("invalid PE window: {0}")]
    InvalidWindow(String),

    #[error("kernel is not differentiable enough for a gradient bound (nu = {nu} <= 1)")]
    KernelNotDifferentiable { nu: f64 },

    #[error("no cycle detected within {horizon} s")]
    NoCycleDetected { horizon: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: line {line}: {msg}")]
    Csv { path: PathBuf, line: u64, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::FactorizationFailure { .. }
                | Error::NotHurwitz { .. }
                | Error::SolveFailure
                | Error::NonFiniteState { .. }
                | Error::NoCycleDetected { .. }
                | Error::KernelNotDifferentiable { .. }
                | Error::Domain(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
