//! Error type shared by every module of the crate.

use crate::hierarchy::CriteriaReport;
use crate::integrator::Trajectory;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, HkcError>;

/// Failures reported by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum HkcError {
    /// Parameter vector outside the admissible set.
    #[error("inadmissible parameters: {0}")]
    InvalidParams(String),

    /// The zero wave vector has no Fourier mode.
    #[error("zero wave vector")]
    ZeroWaveVector,

    /// Wave vector, phase and component do not form an admissible mode.
    #[error("inadmissible mode: {0}")]
    InadmissibleMode(String),

    /// Operation requires a compatible triad.
    #[error("incompatible triad")]
    IncompatibleTriad,

    /// State vector or matrix has the wrong length.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The model violates the consistency criteria and no override was given.
    #[error("model violates consistency criteria: {0}")]
    Inconsistent(Box<CriteriaReport>),

    /// Newton iteration failed; carries the last iterate.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64, last: Vec<f64> },

    /// Trajectory left the finite range; carries what was computed so far.
    #[error("blow-up at t = {t}")]
    BlowUp { t: f64, last: Vec<f64>, partial: Box<Trajectory> },

    /// Adaptive step size fell below the configured minimum.
    #[error("step size underflow at t = {t} (dt = {dt:e})")]
    StepUnderflow { t: f64, dt: f64, partial: Box<Trajectory> },

    /// Shell cap too small to contain every unstable wave vector.
    #[error("shell cap {given} too small, need at least {needed}")]
    InsufficientShellCap { given: u32, needed: u32 },

    /// The crossing at this wave vector is not of pitchfork type.
    #[error("not a pitchfork crossing: {0}")]
    NotPitchfork(String),

    /// Bad configuration or malformed input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HkcError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, HkcError::NoConvergence { .. } | HkcError::BlowUp { .. } | HkcError::StepUnderflow { .. })
    }
}
