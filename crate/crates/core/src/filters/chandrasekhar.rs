//! Chandrasekhar factorization of the Riccati flow. With `Ṗ(t) = L Ṗ(0) Lᵀ`,
//! `dL/dt = (𝒜 − K h) L`, `dK/dt = L Ṗ(0) Lᵀ hᵀR⁻¹`, and `P` is recovered by
//! quadrature of `Ṗ`.

use nalgebra::DMatrix;

use super::riccati::{pdot0, step_grid, symmetrize};
use crate::error::{Error, Result};
use crate::observation::LinearObservation;
use crate::spectral::LinearizedOperator;

#[derive(Debug, Clone, PartialEq)]
pub struct ChandrasekharState {
    pub l: DMatrix<f64>,
    /// Gain `P hᵀR⁻¹`.
    pub k: DMatrix<f64>,
    pub pdot0: DMatrix<f64>,
    pub p0: DMatrix<f64>,
}

impl ChandrasekharState {
    /// `L(0) = I`, `K(0) = P(0) hᵀR⁻¹`, `Ṗ(0)` from the Riccati right-hand side.
    pub fn new(
        p0: &DMatrix<f64>,
        amat: &LinearizedOperator,
        obs: &LinearObservation,
        f: &DMatrix<f64>,
    ) -> Result<Self> {
        let pd = pdot0(p0, amat, obs, f)?;
        let n = p0.nrows();
        Ok(Self {
            l: DMatrix::identity(n, n),
            k: p0 * obs.h.transpose() * &obs.precision,
            pdot0: pd,
            p0: p0.clone(),
        })
    }
}

/// Sampled gain and covariance paths on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChandrasekharPath {
    pub times: Vec<f64>,
    pub k: Vec<DMatrix<f64>>,
    pub p: Vec<DMatrix<f64>>,
}

fn derivs(
    l: &DMatrix<f64>,
    k: &DMatrix<f64>,
    a: &DMatrix<f64>,
    h: &DMatrix<f64>,
    ht_r: &DMatrix<f64>,
    pd0: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let dl = (a - k * h) * l;
    let dk = l * pd0 * l.transpose() * ht_r;
    (dl, dk)
}

/// Co-integrates `L` and `K` with classical RK4 and accumulates
/// `P(t) = P(0) + ∫ L Ṗ(0) Lᵀ` by the trapezoid rule. Records every
/// `record_every` steps plus both ends.
pub fn chandrasekhar_integrate(
    cstate: &ChandrasekharState,
    amat: &LinearizedOperator,
    obs: &LinearObservation,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<ChandrasekharPath> {
    let n = cstate.p0.nrows();
    if amat.dim() != n || obs.h.ncols() != n || cstate.l.shape() != (n, n) {
        return Err(Error::DimensionMismatch("Chandrasekhar state and system sizes differ".into()));
    }
    let (steps, h) = step_grid(t_end, dt)?;
    let a = amat.matrix();
    let ht_r = obs.h.transpose() * &obs.precision;
    let pd0 = &cstate.pdot0;
    let every = record_every.max(1);

    let mut l = cstate.l.clone();
    let mut k = cstate.k.clone();
    let mut p = cstate.p0.clone();
    let mut pdot = &l * pd0 * l.transpose();
    let mut path = ChandrasekharPath { times: vec![0.0], k: vec![k.clone()], p: vec![p.clone()] };
    for step in 1..=steps {
        let (l1, k1) = derivs(&l, &k, a, &obs.h, &ht_r, pd0);
        let (l2, k2) = derivs(&(&l + &l1 * (0.5 * h)), &(&k + &k1 * (0.5 * h)), a, &obs.h, &ht_r, pd0);
        let (l3, k3) = derivs(&(&l + &l2 * (0.5 * h)), &(&k + &k2 * (0.5 * h)), a, &obs.h, &ht_r, pd0);
        let (l4, k4) = derivs(&(&l + &l3 * h), &(&k + &k3 * h), a, &obs.h, &ht_r, pd0);
        l += (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
        k += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let next_pdot = &l * pd0 * l.transpose();
        p += (&pdot + &next_pdot) * (0.5 * h);
        p = symmetrize(&p);
        pdot = next_pdot;
        if l.iter().chain(k.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: step as u64, time: step as f64 * h });
        }
        if step % every == 0 || step == steps {
            path.times.push(step as f64 * h);
            path.k.push(k.clone());
            path.p.push(p.clone());
        }
    }
    Ok(path)
}
