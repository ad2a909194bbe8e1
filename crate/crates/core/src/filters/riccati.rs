//! Riccati dynamics of the error covariance,
//! `Ṗ = 𝒜P + P𝒜ᵀ − P hᵀR⁻¹h P + F`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::observation::LinearObservation;
use crate::spectral::LinearizedOperator;

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiState {
    pub p: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

impl RiccatiState {
    pub fn new(p: DMatrix<f64>, f: DMatrix<f64>) -> Result<Self> {
        if !p.is_square() || p.shape() != f.shape() {
            return Err(Error::DimensionMismatch("P and F must be square and the same size".into()));
        }
        let state = Self { p, f };
        state.check()?;
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// Symmetry to 1e-10 and `min eig(P) ≥ −1e-8·max(‖P‖, 1)`.
    pub fn check(&self) -> Result<()> {
        let scale = self.p.amax().max(1.0);
        if (&self.p - self.p.transpose()).amax() > SYMMETRY_TOL * scale {
            return Err(Error::InvalidArgument("P is not symmetric".into()));
        }
        let min = self.p.clone().symmetric_eigenvalues().min();
        if min < -PSD_TOL * scale {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
        }
        Ok(())
    }
}

fn check_dims(p: &DMatrix<f64>, amat: &LinearizedOperator, obs: &LinearObservation) -> Result<()> {
    let n = p.nrows();
    if amat.dim() != n || obs.h.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "P is {n}x{n}, 𝒜 is {}x{}, h has {} columns",
            amat.dim(),
            amat.dim(),
            obs.h.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn rhs_with_info(p: &DMatrix<f64>, a: &DMatrix<f64>, info: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    let ap = a * p;
    let out = &ap + ap.transpose() - p * info * p + f;
    symmetrize(&out)
}

pub fn riccati_rhs(
    p: &DMatrix<f64>,
    amat: &LinearizedOperator,
    obs: &LinearObservation,
    f: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_dims(p, amat, obs)?;
    Ok(rhs_with_info(p, amat.matrix(), &obs.information(), f))
}

/// `Ṗ(0)`, the Riccati right-hand side at the initial covariance.
pub fn pdot0(
    p0: &DMatrix<f64>,
    amat: &LinearizedOperator,
    obs: &LinearObservation,
    f: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    riccati_rhs(p0, amat, obs, f)
}

/// Clips small negative eigenvalues (roundoff) to zero; larger violations are errors.
fn repair_psd(p: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = p.amax().max(1.0);
    let eig = p.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return Ok(p);
    }
    if min < -PSD_TOL * scale {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    Ok(symmetrize(&(v * DMatrix::from_diagonal(&clipped) * v.transpose())))
}

fn rk4(p: &DMatrix<f64>, a: &DMatrix<f64>, info: &DMatrix<f64>, f: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let k1 = rhs_with_info(p, a, info, f);
    let k2 = rhs_with_info(&(p + &k1 * (0.5 * dt)), a, info, f);
    let k3 = rhs_with_info(&(p + &k2 * (0.5 * dt)), a, info, f);
    let k4 = rhs_with_info(&(p + &k3 * dt), a, info, f);
    p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// One classical RK4 step followed by symmetrization and PSD repair.
pub fn riccati_step(
    state: &RiccatiState,
    amat: &LinearizedOperator,
    obs: &LinearObservation,
    dt: f64,
) -> Result<RiccatiState> {
    check_dims(&state.p, amat, obs)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be > 0".into()));
    }
    let next = rk4(&state.p, amat.matrix(), &obs.information(), &state.f, dt);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: 0, time: f64::NAN });
    }
    Ok(RiccatiState { p: repair_psd(symmetrize(&next))?, f: state.f.clone() })
}

/// Number of steps and the uniform step that land exactly on `t_end`.
pub(crate) fn step_grid(t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0 && t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument("need dt > 0 and finite t_end >= 0".into()));
    }
    let n = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    Ok((n, if n == 0 { dt } else { t_end / n as f64 }))
}

/// Time grid and covariance path of a Riccati integration.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiPath {
    pub times: Vec<f64>,
    pub p: Vec<DMatrix<f64>>,
}

/// Integrates from `t = 0` to `t_end`, recording every `record_every` steps
/// (the initial and final states are always kept).
pub fn riccati_path(
    p0: &DMatrix<f64>,
    amat: &LinearizedOperator,
    obs: &LinearObservation,
    f: &DMatrix<f64>,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<RiccatiPath> {
    let mut state = RiccatiState::new(p0.clone(), f.clone())?;
    check_dims(&state.p, amat, obs)?;
    let (n, h) = step_grid(t_end, dt)?;
    let every = record_every.max(1);
    let info = obs.information();
    let mut times = vec![0.0];
    let mut path = vec![state.p.clone()];
    for k in 1..=n {
        let next = rk4(&state.p, amat.matrix(), &info, &state.f, h);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k as u64, time: k as f64 * h });
        }
        state.p = repair_psd(symmetrize(&next))?;
        if k % every == 0 || k == n {
            times.push(k as f64 * h);
            path.push(state.p.clone());
        }
    }
    Ok(RiccatiPath { times, p: path })
}

/// `P(t_end)` from `P(0) = p0`.
pub fn riccati_integrate(
    p0: &DMatrix<f64>,
    amat: &LinearizedOperator,
    obs: &LinearObservation,
    f: &DMatrix<f64>,
    t_end: f64,
    dt: f64,
) -> Result<RiccatiState> {
    let path = riccati_path(p0, amat, obs, f, t_end, dt, usize::MAX)?;
    Ok(RiccatiState { p: path.p.last().cloned().expect("nonempty path"), f: f.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn scalar_system(a: f64, h: f64) -> (LinearizedOperator, LinearObservation) {
        (LinearizedOperator::from_matrix(scalar(a)).unwrap(), LinearObservation::new(scalar(h)))
    }

    #[test]
    fn rhs_trivial_cases() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let zero_a = LinearizedOperator::from_matrix(DMatrix::zeros(2, 2)).unwrap();
        let zero_h = LinearObservation::new(DMatrix::zeros(1, 2));
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 3.0]);
        assert_eq!(riccati_rhs(&p, &zero_a, &zero_h, &f).unwrap(), f);
        let a = LinearizedOperator::from_matrix(DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -0.3])).unwrap();
        let h = LinearObservation::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]));
        assert_eq!(riccati_rhs(&DMatrix::zeros(2, 2), &a, &h, &f).unwrap(), f);
        assert_eq!(pdot0(&DMatrix::zeros(2, 2), &a, &h, &f).unwrap(), f);
    }

    #[test]
    fn scalar_root_is_stationary() {
        let (a, h, q) = (-0.5, 1.0, 0.2);
        let (am, obs) = scalar_system(a, h);
        let p_star = (a + (a * a + h * h * q).sqrt()) / (h * h);
        assert!(riccati_rhs(&scalar(p_star), &am, &obs, &scalar(q)).unwrap()[(0, 0)].abs() < 1e-15);
        // Hand evaluation at p = 1: 2·(−0.5)·1 − 1 + 0.2 = −1.8.
        assert!((pdot0(&scalar(1.0), &am, &obs, &scalar(q)).unwrap()[(0, 0)] + 1.8).abs() < 1e-15);
    }

    #[test]
    fn zero_generator_without_observation_is_linear_in_time() {
        let f = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.2]);
        let p0 = DMatrix::identity(2, 2);
        let a = LinearizedOperator::from_matrix(DMatrix::zeros(2, 2)).unwrap();
        let h = LinearObservation::new(DMatrix::zeros(1, 2));
        let p = riccati_integrate(&p0, &a, &h, &f, 1.5, 0.01).unwrap();
        assert!((p.p - (p0 + &f * 1.5)).amax() < 1e-12);
    }

    #[test]
    fn large_psd_violation_is_error() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(matches!(repair_psd(p), Err(Error::NotPositiveSemidefinite { .. })));
        let tiny = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-12]);
        assert!(repair_psd(tiny).unwrap().symmetric_eigenvalues().min() >= -1e-15);
        assert!(RiccatiState::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]), DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn step_grid_lands_on_end() {
        assert_eq!(step_grid(1.0, 0.1).unwrap().0, 10);
        let (n, h) = step_grid(1.0, 0.3).unwrap();
        assert_eq!(n, 4);
        assert!((h * n as f64 - 1.0).abs() < 1e-15);
    }
}
