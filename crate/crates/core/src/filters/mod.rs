//! Particle realizations of the Zakai/FKK filters and the linearized Kalman filter.

pub mod chandrasekhar;
pub mod diagnostics;
pub mod kalman;
pub mod particle;
pub mod riccati;

pub use chandrasekhar::{chandrasekhar_integrate, ChandrasekharPath, ChandrasekharState};
pub use diagnostics::{error_covariance_mc, innovation_path, quadratic_variation, Posterior, ReplicaPath};
pub use kalman::{
    kalman_log_increment, kalman_mean_step, kalman_mean_step_about, kalman_step_about, kalman_step_ito,
    kalman_step_whitenoise, KalmanState,
};
pub use particle::{
    pf_moment, pf_normalize, pf_propagate, pf_resample, pf_step, pf_update_ito, pf_update_whitenoise,
    unnormalized_moment, GaussianPrior, ParticleCloud,
};
pub use riccati::{pdot0, riccati_integrate, riccati_path, riccati_rhs, riccati_step, RiccatiPath, RiccatiState};
