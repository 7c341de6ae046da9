//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A play or Preisach operation received a threshold r <= 0.
    #[error("invalid threshold r = {0}; thresholds must be positive")]
    InvalidThreshold(f64),

    /// Array or field sizes do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The brute-force variational-inequality oracle found no admissible
    /// candidate. This signals a bug in the caller or the oracle grid.
    #[error("play oracle failure: no grid candidate satisfies the variational inequality (xi_prev={xi_prev}, u={u}, r={r})")]
    OracleFailure { xi_prev: f64, u: f64, r: f64 },

    /// A pressure transform g violates g(0)=0 or the sampled derivative bounds.
    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    /// Density mass integral diverges (decay family with m <= 2).
    #[error("divergent density mass: decay exponent m = {0} must exceed 2")]
    DivergentMass(f64),

    /// Initial data incompatible with the memory support bound.
    #[error("incompatible initial data: {0}")]
    IncompatibleInitialData(String),

    /// A scenario field failed validation.
    #[error("invalid scenario field `{field}`: {message}")]
    InvalidScenario { field: String, message: String },

    /// Scenario document could not be parsed.
    #[error("scenario parse error: {0}")]
    Parse(String),

    /// The nonlinear solver did not converge within its iteration budget.
    #[error("step {step} failed to converge: residual norm {residual:.3e} after {iterations} iterations")]
    StepFailure {
        step: usize,
        residual: f64,
        iterations: usize,
    },

    /// A structural identity that must hold by construction was violated.
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    /// A field contains NaN or infinite entries.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Checkpoint file is malformed or does not match the scenario.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for a named scenario-field violation.
    pub fn scenario(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidScenario {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
