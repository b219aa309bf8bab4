use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("parameter file line {line}: {reason}")]
    ParameterSyntax { line: usize, reason: String },

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("algebraic solve did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("physical bound violated: {what} = {value:e}")]
    PhysicalBoundViolation { what: &'static str, value: f64 },

    #[error("exchange current must be positive, got {0:e}")]
    NonPositiveExchangeCurrent(f64),

    #[error("surface concentration {value:e} outside the open interval (0, {max:e})")]
    BoundViolation { value: f64, max: f64 },

    #[error("electrolyte concentration at the clamp floor ({0:e} mol/m3)")]
    ClampFloorHit(f64),

    #[error("SEI layer thickness must be positive, got {0:e}")]
    ZeroThickness(f64),

    #[error("voltage/SoH map is empty")]
    EmptyMap,

    #[error("voltage/SoH map violates its invariants: {0}")]
    InvalidMap(String),

    #[error("replay buffer holds {len} transitions, cannot sample {requested}")]
    Underfilled { len: usize, requested: usize },

    #[error("refusing to write an empty series")]
    EmptySeries,

    #[error("step budget of {budget} exhausted during {phase}")]
    BudgetExceeded { phase: String, budget: usize },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("episode already finished; call reset first")]
    EpisodeOver,

    #[error("worker panicked: {0}")]
    Panicked(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
