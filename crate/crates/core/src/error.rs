//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Scenario or parameter validation failed. Lists every violated constraint.
    #[error("invalid configuration: {0}")]
    Validation(String),

    /// Coincident emitters; the dipole-dipole kernels diverge.
    #[error("singular separation: {0}")]
    SingularSeparation(String),

    /// An operation that needs an input pulse was called on a scenario without one.
    #[error("scenario has no input pulse")]
    MissingDrive,

    /// Decay-spectrum operations need at least one nonzero initial amplitude.
    #[error("scenario has no initial excitation and no input pulse")]
    EmptyScenario,

    /// Numerical failure (singular solve, non-convergence, NaN detected).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Two spectrum grids that must match do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code convention: 1 validation, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::SingularSeparation(..)
            | Error::MissingDrive
            | Error::EmptyScenario
            | Error::GridMismatch(_) => 1,
            Error::Numerical(_) => 2,
            Error::Io(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
