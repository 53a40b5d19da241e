use std::path::PathBuf;

use crate::trajectory::Trajectory;

/// Errors raised anywhere in the stopping-time pipeline.
#[derive(Debug, thiserror::Error)]
pub enum StopTimeError {
    #[error("contract violation: {0}")]
    Contract(String),

    /// A non-finite state (or criterion value) was produced. The partial
    /// trajectory up to and including `last_finite` is preserved.
    #[error("trajectory diverged after step {last_finite}")]
    Diverged {
        last_finite: usize,
        partial: Box<Trajectory>,
    },

    #[error("stopping-time sensitivity undefined: stopped at initialization")]
    StoppedAtInit,

    #[error("criterion not reached before t_max = {t_max}")]
    NoStop { t_max: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("grazing contact at the stopping event: |dJ/dt| = {rate:e} below {threshold:e}")]
    Grazing { rate: f64, threshold: f64 },

    #[error("dense propagation refused: {rows}x{cols} exceeds the size cap")]
    SizeCap { rows: usize, cols: usize },

    #[error("finite-difference oracle failed on component {component}")]
    OracleFailure { component: usize },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),
}

impl StopTimeError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        StopTimeError::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StopTimeError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            StopTimeError::Diverged { .. }
                | StopTimeError::StoppedAtInit
                | StopTimeError::NoStop { .. }
                | StopTimeError::StepUnderflow { .. }
                | StopTimeError::Grazing { .. }
                | StopTimeError::OracleFailure { .. }
                | StopTimeError::HypothesisViolated(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, StopTimeError>;
