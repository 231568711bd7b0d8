use thiserror::Error;

/// Failure modes of the simulation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid model or run parameters.
    #[error("configuration error: {0}")]
    Config(String),
    /// A caller broke an operation precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A numerical kernel failed (non-convergence, non-finite output).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// No particles are selected, so many-body quantities are undefined.
    #[error("empty system: {0}")]
    EmptySystem(String),
    /// The data cannot be fitted (non-positive values, too few points).
    #[error("fit domain error: {0}")]
    FitDomain(String),
    /// A trial-state or initial-state construction could not be completed.
    #[error("construction failed: {0}")]
    Construction(String),
    /// A checked mathematical invariant does not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
