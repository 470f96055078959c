use thiserror::Error;

/// Errors reported by the toolkit.
///
/// Variants are split between configuration problems (bad parameters,
/// dimension mismatches) and numerical failures (divergence, solver
/// breakdown), so callers can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("trajectory diverged at t = {t}")]
    Divergence { t: f64, last_state: Vec<f64> },

    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    MaxStepsExceeded { max_steps: u64, t: f64 },

    #[error("Newton iteration did not converge: residual {residual:.3e} after {iterations} iterations")]
    NewtonNonConvergence {
        residual: f64,
        iterations: usize,
        last_iterate: Vec<f64>,
    },

    #[error("singular Jacobian encountered (candidate fold)")]
    SingularJacobian,

    #[error("trajectory too short: {got} samples, need at least {needed}")]
    TooShortTrajectory { needed: usize, got: usize },

    #[error("no saddle equilibrium found for the given parameters")]
    NoSaddle,

    #[error("periodic orbit collapsed to an equilibrium (period {period:.3e}, amplitude {amplitude:.3e})")]
    OrbitCollapsed { period: f64, amplitude: f64 },

    #[error("orbit seeding failed: {0}")]
    SeedFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than numerical breakdown.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::DimensionMismatch { .. } | Error::NonFinite(_)
        )
    }
}
