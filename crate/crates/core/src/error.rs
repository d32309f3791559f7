use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("metric lost positivity at point {point} (t = {t}, min eigenvalue {min_eigenvalue:e})")]
    PositivityLost {
        t: f64,
        point: usize,
        min_eigenvalue: f64,
    },
    #[error("metric is singular at point {point}")]
    SingularMetric { point: usize },
    #[error("complex dimension {n} is too small for this operation (need n >= 2)")]
    DimensionTooSmall { n: usize },
    #[error("complex dimension {n} is unsupported (only n = 2)")]
    DimensionUnsupported { n: usize },
    #[error("non-finite value in {0}")]
    NonFiniteValue(&'static str),
    #[error("expected {expected} classes, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("model {0} does not have nef canonical bundle")]
    NotNef(String),
    #[error("model {0} has no closed-form solution")]
    NoClosedForm(String),
    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),
    #[error("step size underflow at t = {t} (last attempted dt = {dt:e})")]
    StepSizeUnderflow { t: f64, dt: f64 },
    #[error("non-positive density at point {point}")]
    NonPositiveDensity { point: usize },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error("unknown model id {0:?}")]
    UnknownModel(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
