use thiserror::Error;

/// Errors raised by the simulation and filtering routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite state at step {step} (t = {time})")]
    NonFinite { step: u64, time: f64 },

    #[error("covariance lost positive semidefiniteness (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("observation operator is nonlinear; a linear operator is required here")]
    NonlinearObservation,

    #[error("observation operator has no noise covariance inverse (noiseless hook)")]
    NoiselessObservation,

    #[error("particle cloud degenerated: all weights are zero")]
    Degenerate,
}

pub type Result<T> = std::result::Result<T, Error>;
