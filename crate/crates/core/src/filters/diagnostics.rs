//! Innovation process and Monte Carlo error covariance.

use crate::error::{Error, Result};
use crate::observation::ObservationRecord;

/// `ν_n = ΔY_n − m_n dt`, where `m_n` is the filter's estimate of `h(X)`
/// just before the `n`-th update.
pub fn innovation_path(record: &ObservationRecord, moment_history: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if moment_history.len() != record.values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} moments for {} observations",
            moment_history.len(),
            record.values.len()
        )));
    }
    let dt = record.dt;
    record
        .increments()
        .iter()
        .zip(moment_history)
        .map(|(dy, m)| {
            if dy.len() != m.len() {
                return Err(Error::DimensionMismatch("moment and observation widths differ".into()));
            }
            Ok(dy.iter().zip(m).map(|(d, h)| d - h * dt).collect())
        })
        .collect()
}

/// Per-component `Σ_n ν_n²`.
pub fn quadratic_variation(increments: &[Vec<f64>]) -> Vec<f64> {
    let width = increments.first().map_or(0, Vec::len);
    let mut qv = vec![0.0; width];
    for inc in increments {
        for (q, v) in qv.iter_mut().zip(inc) {
            *q += v * v;
        }
    }
    qv
}

/// Filter output at one time, in real-ified coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Posterior {
    /// Point estimate; `π(f)` is read as `f(mean)`, exact for affine `f`.
    Mean(Vec<f64>),
    /// Weighted particles with normalized weights.
    Particles { points: Vec<Vec<f64>>, weights: Vec<f64> },
}

impl Posterior {
    fn expect(&self, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        match self {
            Posterior::Mean(m) => f(m),
            Posterior::Particles { points, weights } => {
                points.iter().zip(weights).map(|(p, w)| w * f(p)).sum()
            }
        }
    }
}

/// One independent (signal, observation, filter) replica sampled on a common time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaPath {
    pub truth: Vec<Vec<f64>>,
    pub posterior: Vec<Posterior>,
}

/// `𝒫_t[f, g] = E[(f(X_t) − π_t f)(g(X_t) − π_t g)]` averaged over replicas.
pub fn error_covariance_mc(
    replicas: &[ReplicaPath],
    f: &dyn Fn(&[f64]) -> f64,
    g: &dyn Fn(&[f64]) -> f64,
) -> Result<Vec<f64>> {
    let first = replicas.first().ok_or_else(|| Error::InvalidArgument("no replicas".into()))?;
    let len = first.truth.len();
    if replicas.iter().any(|r| r.truth.len() != len || r.posterior.len() != len) {
        return Err(Error::DimensionMismatch("replica paths differ in length".into()));
    }
    let n = replicas.len() as f64;
    Ok((0..len)
        .map(|t| {
            replicas
                .iter()
                .map(|r| {
                    let x = &r.truth[t];
                    (f(x) - r.posterior[t].expect(f)) * (g(x) - r.posterior[t].expect(g))
                })
                .sum::<f64>()
                / n
        })
        .collect())
}
