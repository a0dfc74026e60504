use std::io;

use thiserror::Error;

/// Errors raised anywhere in the lab.
#[derive(Debug, Error)]
pub enum Error {
    /// Two agents occupy the same point, so an inverse-power force is undefined.
    #[error("singular interaction: agents {a} and {b} are coincident")]
    Singular { a: usize, b: usize },

    /// The integrator produced a non-finite coordinate.
    #[error("integration blow-up at t={time:.4}s for {kind} {index}")]
    Blowup {
        kind: &'static str,
        index: usize,
        time: f64,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid parameters: {0}")]
    Params(String),

    /// A controller was asked to act before its policies were loaded.
    #[error("controller state: {0}")]
    State(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Training produced a non-finite loss.
    #[error("training diverged at update {update}: loss = {loss}")]
    Divergence { update: usize, loss: f64 },

    #[error("weight file: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
