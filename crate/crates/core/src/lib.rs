//! Spectral simulation and nonlinear filtering of stochastic wave equations.
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod filters;
pub mod integrator;
pub mod noise;
pub mod observation;
pub mod spectral;

pub use error::{Error, Result};
pub use integrator::{simulate_path, step_mild, PathConfig, SignalModel, Trajectory};
pub use noise::{
    sample_jump_increment, sample_levy_increment, sample_wiener_increment, JumpLaw, JumpSpec, NoiseCoupling,
    NoiseIncrement, NoiseSpec, StreamFamily, StreamKey, WienerSpec,
};
pub use observation::{
    likelihood_log_increment_ito, likelihood_log_increment_wn, observe_ito, observe_whitenoise, Functional,
    LinearObservation, ObservationMode, ObservationOperator, ObservationRecord, Part,
};
pub use spectral::{
    apply_free_propagator, build_basis, eval_jacobian, eval_nonlinearity, free_generator, sobolev_norm,
    Component, FieldState, LinearizedOperator, ModelKind, ModelSpec, SpectralBasis,
};
