//! Error types shared across the simulator.

use thiserror::Error;

/// Errors produced by the numeric kernels, the protocol layer, and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum SimError {
    /// An argument left the mathematical domain of an operation
    /// (non-positive power, negative age, GPD support violation, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Event timestamps arrived out of order.
    #[error("time ordering error: {0}")]
    Ordering(String),

    /// The GPD mean is undefined for shape >= 1.
    #[error("undefined GPD mean: shape xi = {xi} >= 1")]
    UndefinedMean { xi: f64 },

    /// An estimator was handed fewer samples than it needs.
    #[error("not enough samples: got {got}, need at least {need}")]
    NotEnoughSamples { got: usize, need: usize },

    /// A federation-round message sequence violated the protocol.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Bad or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Underlying I/O failure while reading configs or writing reports.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SimError>;
