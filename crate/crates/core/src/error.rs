use std::io;

/// Errors produced by the placement, coefficient, and solver routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("placement infeasible in cell {cell}: {reason}")]
    Infeasible { cell: usize, reason: String },

    #[error("time step {h} exceeds the smallest coupling delay {tau_min}")]
    StepTooLarge { h: f64, tau_min: f64 },

    #[error("non-finite value in unknown {index} at step {step}")]
    NonFinite { index: usize, step: usize },

    #[error("fixed-point iteration did not converge at step {step} after {iterations} iterations (update {update:e})")]
    NoConvergence {
        step: usize,
        iterations: usize,
        update: f64,
    },

    #[error("evaluation point {0:?} lies inside the scatterer region")]
    PointInside([f64; 3]),

    #[error("singular system at s = {re} + {im}i")]
    Singular { re: f64, im: f64 },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("delta = {delta}: {source}")]
    AtDelta {
        delta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
