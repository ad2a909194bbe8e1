//! First-order Kalman filter on the real-ified system
//! `dX̂ = (𝒜 − P hᵀR⁻¹h) X̂ dt + P hᵀR⁻¹ dY`.

use nalgebra::{DMatrix, DVector};

use super::riccati::{riccati_step, RiccatiState};
use crate::error::{Error, Result};
use crate::observation::LinearObservation;
use crate::spectral::LinearizedOperator;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: DVector<f64>,
    pub cov: RiccatiState,
    pub time: f64,
    /// `Σ (h X̂)ᵀR⁻¹ΔY − ½|h X̂|²_R dt` with the mean before each update.
    pub log_evidence: f64,
}

impl KalmanState {
    pub fn new(mean: DVector<f64>, cov: RiccatiState, time: f64) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch("mean and covariance sizes differ".into()));
        }
        Ok(Self { mean, cov, time, log_evidence: 0.0 })
    }
}

/// Mean update over one step given the covariance at the end of the step:
/// Crank-Nicolson on `(𝒜 − K h)` with `K = P_{n+1} hᵀR⁻¹`. The linearization
/// may be taken about a reference path `r`: the scheme then acts on `x − r`
/// with innovation `ΔY − h r̄ dt`, `r̄` the step midpoint of the reference.
pub fn kalman_mean_step_about(
    mean: &DVector<f64>,
    reference: Option<(&DVector<f64>, &DVector<f64>)>,
    p_next: &DMatrix<f64>,
    dy: &[f64],
    dt: f64,
    amat: &LinearizedOperator,
    obs: &LinearObservation,
) -> Result<DVector<f64>> {
    let n = mean.len();
    if amat.dim() != n || p_next.nrows() != n || obs.h.ncols() != n || dy.len() != obs.h.nrows() {
        return Err(Error::DimensionMismatch("Kalman step operands disagree in size".into()));
    }
    let gain = p_next * obs.h.transpose() * &obs.precision;
    let g = amat.matrix() - &gain * &obs.h;
    let id = DMatrix::<f64>::identity(n, n);
    let mut innovation = DVector::from_column_slice(dy);
    let delta = match reference {
        None => mean.clone(),
        Some((r_now, r_next)) => {
            let mid = (r_now + r_next) * 0.5;
            innovation -= &obs.h * mid * dt;
            mean - r_now
        }
    };
    let rhs = (&id + &g * (0.5 * dt)) * delta + gain * innovation;
    let lhs = &id - &g * (0.5 * dt);
    let solved = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidArgument("singular Crank-Nicolson system".into()))?;
    Ok(match reference {
        None => solved,
        Some((_, r_next)) => solved + r_next,
    })
}

pub fn kalman_mean_step(
    mean: &DVector<f64>,
    p_next: &DMatrix<f64>,
    dy: &[f64],
    dt: f64,
    amat: &LinearizedOperator,
    obs: &LinearObservation,
) -> Result<DVector<f64>> {
    kalman_mean_step_about(mean, None, p_next, dy, dt, amat, obs)
}

/// `(h x)ᵀR⁻¹ΔY − ½|h x|²_R dt`.
pub fn kalman_log_increment(mean: &DVector<f64>, dy: &[f64], dt: f64, obs: &LinearObservation) -> f64 {
    let hx = &obs.h * mean;
    let w = &obs.precision * &hx;
    w.dot(&DVector::from_column_slice(dy)) - 0.5 * hx.dot(&w) * dt
}

/// One filter step: `P` by [`riccati_step`], then the mean by
/// [`kalman_mean_step_about`] with the updated `P`.
pub fn kalman_step_about(
    kstate: &KalmanState,
    reference: Option<(&DVector<f64>, &DVector<f64>)>,
    dy: &[f64],
    dt: f64,
    amat: &LinearizedOperator,
    obs: &LinearObservation,
) -> Result<KalmanState> {
    let cov = riccati_step(&kstate.cov, amat, obs, dt)?;
    let mean = kalman_mean_step_about(&kstate.mean, reference, &cov.p, dy, dt, amat, obs)?;
    let pred = match reference {
        None => kstate.mean.clone(),
        Some((r_now, _)) => &kstate.mean - r_now,
    };
    let mut inc_dy = dy.to_vec();
    if let Some((r_now, _)) = reference {
        let hr = &obs.h * r_now;
        inc_dy.iter_mut().zip(hr.iter()).for_each(|(d, v)| *d -= v * dt);
    }
    let log_evidence = kstate.log_evidence + kalman_log_increment(&pred, &inc_dy, dt, obs);
    Ok(KalmanState { mean, cov, time: kstate.time + dt, log_evidence })
}

pub fn kalman_step_ito(
    kstate: &KalmanState,
    dy: &[f64],
    dt: f64,
    amat: &LinearizedOperator,
    obs: &LinearObservation,
) -> Result<KalmanState> {
    kalman_step_about(kstate, None, dy, dt, amat, obs)
}

/// The Itô step driven by `Y dt`.
pub fn kalman_step_whitenoise(
    kstate: &KalmanState,
    y: &[f64],
    dt: f64,
    amat: &LinearizedOperator,
    obs: &LinearObservation,
) -> Result<KalmanState> {
    let dy: Vec<f64> = y.iter().map(|v| v * dt).collect();
    kalman_step_ito(kstate, &dy, dt, amat, obs)
}
