//! Bootstrap particle approximation of the unnormalized (Zakai) and
//! normalized (FKK) filters, with Kallianpur-Striebel reweighting.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrator::{step_mild, PathConfig, SignalModel};
use crate::noise::{sample_levy_increment, StreamFamily, StreamKey};
use crate::observation::{ObservationMode, ObservationOperator};
use crate::spectral::{FieldState, SpectralBasis};

/// Weighted particle measure. `log_weights` carry the unnormalized measure
/// since the last [`pf_normalize`]; `log_evidence` accumulates `log ϑ_t(1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub particles: Vec<FieldState>,
    pub log_weights: Vec<f64>,
    pub step: u64,
    pub ess: f64,
    pub log_evidence: f64,
}

/// Gaussian law on the real-ified coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() || cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch("prior covariance must be n x n".into()));
        }
        Ok(Self { mean, cov })
    }

    /// Independent coordinates with a common variance.
    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Self {
        let n = mean.len();
        Self { mean, cov: DMatrix::identity(n, n) * variance }
    }

    /// Lower factor `L` with `L Lᵀ = cov`; semidefinite covariances go through
    /// the symmetric eigendecomposition.
    pub fn factor(&self) -> Result<DMatrix<f64>> {
        if let Some(ch) = self.cov.clone().cholesky() {
            return Ok(ch.l());
        }
        let eig = self.cov.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < -1e-12 * self.cov.amax().max(1.0) {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
        }
        let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
    }
}

impl ParticleCloud {
    /// Uniformly weighted cloud; fails on an empty list.
    pub fn uniform(particles: Vec<FieldState>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidArgument("particle cloud must be nonempty".into()));
        }
        let n = particles.len();
        let lw = -(n as f64).ln();
        Ok(Self { particles, log_weights: vec![lw; n], step: 0, ess: n as f64, log_evidence: 0.0 })
    }

    /// `count` draws from `prior`; particle `i` uses `key.with_index(i).rng_at(0)`.
    pub fn from_prior(
        prior: &GaussianPrior,
        count: usize,
        basis: &SpectralBasis,
        time: f64,
        key: StreamKey,
    ) -> Result<Self> {
        if prior.mean.len() != basis.real_dim() {
            return Err(Error::DimensionMismatch("prior dimension must equal basis.real_dim()".into()));
        }
        let l = prior.factor()?;
        let particles = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = key.with_index(i as u64).rng_at(0);
                let xi = DVector::from_iterator(
                    prior.mean.len(),
                    (0..prior.mean.len()).map(|_| StandardNormal.sample(&mut rng)),
                );
                let x = &prior.mean + &l * xi;
                basis.from_real(x.as_slice(), time)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::uniform(particles)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Normalized weights, computed without modifying the cloud.
    pub fn weights(&self) -> Vec<f64> {
        let m = max_finite(&self.log_weights);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = w.iter().sum();
        w.iter().map(|v| v / s).collect()
    }

    /// Weighted mean of the real-ified coordinates.
    pub fn mean(&self, basis: &SpectralBasis) -> DVector<f64> {
        let w = self.weights();
        let mut acc = DVector::zeros(basis.real_dim());
        for (p, wi) in self.particles.iter().zip(&w) {
            if *wi > 0.0 {
                acc += DVector::from_vec(basis.to_real(p)) * *wi;
            }
        }
        acc
    }

    /// Weighted covariance of the real-ified coordinates.
    pub fn covariance(&self, basis: &SpectralBasis) -> DMatrix<f64> {
        let w = self.weights();
        let mean = self.mean(basis);
        let n = basis.real_dim();
        let mut acc = DMatrix::zeros(n, n);
        for (p, wi) in self.particles.iter().zip(&w) {
            if *wi > 0.0 {
                let d = DVector::from_vec(basis.to_real(p)) - &mean;
                acc += &d * d.transpose() * *wi;
            }
        }
        acc
    }
}

fn max_finite(lw: &[f64]) -> f64 {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_finite() {
        m
    } else {
        0.0
    }
}

fn effective_sample_size(lw: &[f64]) -> f64 {
    let m = max_finite(lw);
    let (s1, s2) = lw.iter().fold((0.0, 0.0), |(a, b), l| {
        let w = (l - m).exp();
        (a + w, b + w * w)
    });
    if s2 > 0.0 {
        s1 * s1 / s2
    } else {
        0.0
    }
}

/// Advances every live particle by one [`step_mild`]. Particle `i` at cloud
/// step `n` draws its increment from `key.with_index(i).rng_at(n + 1)`, so a
/// one-particle cloud reproduces [`crate::integrator::simulate_path`] with the
/// same key. Particles that trip the guard (or overflow) are frozen with
/// log-weight `−∞`.
pub fn pf_propagate(
    cloud: &ParticleCloud,
    config: &PathConfig,
    model: &SignalModel,
    key: StreamKey,
) -> Result<ParticleCloud> {
    if cloud.is_empty() {
        return Err(Error::InvalidArgument("particle cloud must be nonempty".into()));
    }
    let dt = config.dt;
    let next_step = cloud.step + 1;
    let results: Vec<(FieldState, f64)> = cloud
        .particles
        .par_iter()
        .zip(cloud.log_weights.par_iter())
        .enumerate()
        .map(|(i, (p, &lw))| {
            if lw == f64::NEG_INFINITY {
                return Ok((p.clone(), lw));
            }
            let mut rng = key.with_index(i as u64).rng_at(next_step);
            let inc = sample_levy_increment(&model.noise.wiener, &model.noise.jump, dt, &mut rng)?;
            match step_mild(p, dt, &inc, model) {
                Ok(mut s) => {
                    s.time = p.time + dt;
                    if config.guard_tripped(&s, &model.basis) {
                        Ok((s, f64::NEG_INFINITY))
                    } else {
                        Ok((s, lw))
                    }
                }
                Err(Error::NonFinite { .. }) => Ok((p.clone(), f64::NEG_INFINITY)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let (particles, log_weights): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let ess = effective_sample_size(&log_weights);
    Ok(ParticleCloud { particles, log_weights, step: next_step, ess, log_evidence: cloud.log_evidence })
}

fn reweight(cloud: &ParticleCloud, inc: impl Fn(&FieldState) -> Result<f64> + Sync) -> Result<ParticleCloud> {
    let log_weights = cloud
        .particles
        .par_iter()
        .zip(cloud.log_weights.par_iter())
        .map(|(p, &lw)| if lw == f64::NEG_INFINITY { Ok(lw) } else { Ok(lw + inc(p)?) })
        .collect::<Result<Vec<_>>>()?;
    let ess = effective_sample_size(&log_weights);
    Ok(ParticleCloud { log_weights, ess, ..cloud.clone() })
}

/// Zakai reweighting by `exp(h(x)·ΔY − ½|h(x)|² dt)`; no normalization.
pub fn pf_update_ito(cloud: &ParticleCloud, dy: &[f64], dt: f64, op: &ObservationOperator) -> Result<ParticleCloud> {
    reweight(cloud, |p| op.log_increment_ito_from(&op.evaluate(p), dy, dt))
}

/// White-noise reweighting by `exp((⟨ζ(x), Y⟩ − ½‖ζ(x)‖²) dt)`.
pub fn pf_update_whitenoise(
    cloud: &ParticleCloud,
    y: &[f64],
    dt: f64,
    op: &ObservationOperator,
) -> Result<ParticleCloud> {
    reweight(cloud, |p| op.log_increment_wn_from(&op.evaluate(p), y, dt))
}

/// Log-sum-exp normalization. Returns the cloud and the increment
/// `log Σ exp(log_weights)`, which is also added to `log_evidence`.
pub fn pf_normalize(cloud: &ParticleCloud) -> Result<(ParticleCloud, f64)> {
    let m = cloud.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Degenerate);
    }
    let s: f64 = cloud.log_weights.iter().map(|l| (l - m).exp()).sum();
    let log_total = m + s.ln();
    let log_weights: Vec<f64> = cloud.log_weights.iter().map(|l| l - log_total).collect();
    let ess = effective_sample_size(&log_weights);
    Ok((
        ParticleCloud {
            log_weights,
            ess,
            log_evidence: cloud.log_evidence + log_total,
            ..cloud.clone()
        },
        log_total,
    ))
}

/// Systematic resampling when `ess < threshold · count`. The uniform offset
/// comes from `key.rng_at(cloud.step)`. The resampled cloud is uniform and
/// keeps the normalization of the input (total mass is moved to the evidence).
pub fn pf_resample(cloud: &ParticleCloud, ess_threshold: f64, key: StreamKey) -> Result<ParticleCloud> {
    if !(0.0..=1.0).contains(&ess_threshold) {
        return Err(Error::InvalidArgument("ess_threshold must lie in [0, 1]".into()));
    }
    let n = cloud.len();
    let frozen = cloud.log_weights.contains(&f64::NEG_INFINITY);
    if cloud.ess >= ess_threshold * n as f64 && !frozen {
        return Ok(cloud.clone());
    }
    let (normed, _) = pf_normalize(cloud)?;
    let w = normed.weights();
    let mut rng = key.rng_at(cloud.step);
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut particles = Vec::with_capacity(n);
    let mut cum = w[0];
    let mut j = 0;
    for i in 0..n {
        let u = u0 + i as f64 / n as f64;
        while u > cum && j + 1 < n {
            j += 1;
            cum += w[j];
        }
        particles.push(cloud.particles[j].clone());
    }
    let lw = -(n as f64).ln();
    Ok(ParticleCloud {
        particles,
        log_weights: vec![lw; n],
        step: cloud.step,
        ess: n as f64,
        log_evidence: normed.log_evidence,
    })
}

/// One complete filter cycle for the observation at the end of the step:
/// propagate, reweight (Itô increment or white-noise sample, per `mode`),
/// normalize, then resample. Particle streams come from
/// `(seed, Particles)` and resampling offsets from `(seed, Resample)`.
/// Returns the new cloud and the effective sample size before resampling.
#[allow(clippy::too_many_arguments)]
pub fn pf_step(
    cloud: &ParticleCloud,
    observation: &[f64],
    mode: ObservationMode,
    config: &PathConfig,
    model: &SignalModel,
    op: &ObservationOperator,
    ess_threshold: f64,
    seed: u64,
) -> Result<(ParticleCloud, f64)> {
    let moved = pf_propagate(cloud, config, model, StreamKey::new(seed, StreamFamily::Particles))?;
    let weighted = match mode {
        ObservationMode::Ito => pf_update_ito(&moved, observation, config.dt, op)?,
        ObservationMode::WhiteNoise => pf_update_whitenoise(&moved, observation, config.dt, op)?,
    };
    let (normed, _) = pf_normalize(&weighted)?;
    let ess = normed.ess;
    let out = pf_resample(&normed, ess_threshold, StreamKey::new(seed, StreamFamily::Resample))?;
    Ok((out, ess))
}

/// `π[f] = Σ w_i f(x_i)` with normalized weights.
pub fn pf_moment(cloud: &ParticleCloud, f: impl Fn(&FieldState) -> f64) -> f64 {
    cloud
        .particles
        .iter()
        .zip(cloud.weights())
        .filter(|(_, w)| *w > 0.0)
        .map(|(p, w)| w * f(p))
        .sum()
}

/// `ϑ[f] = Σ exp(log_weights_i) f(x_i)`, the unnormalized measure applied to `f`.
pub fn unnormalized_moment(cloud: &ParticleCloud, f: impl Fn(&FieldState) -> f64) -> f64 {
    cloud
        .particles
        .iter()
        .zip(&cloud.log_weights)
        .filter(|(_, l)| **l > f64::NEG_INFINITY)
        .map(|(p, l)| l.exp() * f(p))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSpec;
    use crate::observation::{Functional, Part};
    use crate::spectral::{build_basis, Component, ModelSpec};
    use num_complex::Complex64;

    fn basis() -> SpectralBasis {
        build_basis(&ModelSpec::paraxial(1, 4)).unwrap()
    }

    fn state(b: &SpectralBasis, re0: f64) -> FieldState {
        let mut s = FieldState::zeros(b);
        s.primary[0] = Complex64::new(re0, 0.0);
        s
    }

    fn mode0(b: &SpectralBasis) -> ObservationOperator {
        ObservationOperator::new(
            vec![Functional::Mode { component: Component::Primary, index: 0, part: Part::Re }],
            b,
        )
        .unwrap()
    }

    #[test]
    fn normalize_examples() {
        let b = basis();
        let mut cloud = ParticleCloud::uniform(vec![state(&b, 1.0), state(&b, 2.0)]).unwrap();
        cloud.log_weights = vec![0.3, 0.3];
        let (n, inc) = pf_normalize(&cloud).unwrap();
        assert!((inc - (0.3 + 2f64.ln())).abs() < 1e-14);
        let (n2, inc2) = pf_normalize(&n).unwrap();
        assert!(inc2.abs() < 1e-15);
        assert_eq!(n.weights(), n2.weights());
        let single = ParticleCloud::uniform(vec![state(&b, 1.0)]).unwrap();
        assert_eq!(single.weights(), vec![1.0]);
        assert!(ParticleCloud::uniform(vec![]).is_err());
    }

    #[test]
    fn single_particle_mean_ignores_data() {
        let b = basis();
        let op = mode0(&b);
        let cloud = ParticleCloud::uniform(vec![state(&b, 0.4)]).unwrap();
        let up = pf_update_ito(&cloud, &[17.0], 0.1, &op).unwrap();
        let (up, _) = pf_normalize(&up).unwrap();
        assert!((pf_moment(&up, |s| s.primary[0].re) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn two_state_bayes() {
        let b = basis();
        let op = mode0(&b);
        let cloud = ParticleCloud::uniform(vec![state(&b, 1.0), state(&b, -0.5)]).unwrap();
        let (dy, dt) = (0.07, 0.1);
        let up = pf_update_ito(&cloud, &[dy], dt, &op).unwrap();
        let w = up.weights();
        // Enumerate the likelihood of the increment under each state and normalize.
        let lik = |h: f64| (-(dy - h * dt).powi(2) / (2.0 * dt)).exp();
        let z = lik(1.0) + lik(-0.5);
        assert!((w[0] - lik(1.0) / z).abs() < 1e-12);
        assert!((w[1] - lik(-0.5) / z).abs() < 1e-12);
    }

    #[test]
    fn resample_examples() {
        let b = basis();
        let cloud = ParticleCloud::uniform((0..5).map(|i| state(&b, i as f64)).collect()).unwrap();
        let key = StreamKey::new(1, StreamFamily::Resample);
        assert_eq!(pf_resample(&cloud, 0.5, key).unwrap(), cloud);

        let mut peaked = cloud.clone();
        peaked.log_weights = vec![f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, f64::NEG_INFINITY];
        peaked.ess = effective_sample_size(&peaked.log_weights);
        let r = pf_resample(&peaked, 0.5, key).unwrap();
        assert!(r.particles.iter().all(|p| p.primary[0].re == 2.0));
        assert!((r.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn propagate_single_particle_matches_path() {
        use crate::integrator::simulate_path;
        use crate::noise::{NoiseCoupling, WienerSpec};
        let b = basis();
        let m = b.num_modes();
        let noise = NoiseSpec {
            wiener: WienerSpec { lambdas: vec![0.3; m] },
            coupling: NoiseCoupling::Multiplicative,
            ..NoiseSpec::silent(m)
        };
        let model = SignalModel::new(b.clone(), noise).unwrap();
        let cfg = PathConfig { dt: 0.01, t_end: 0.03, guard_lambda: 1e6, guard_order: 1, seed: 3 };
        let key = StreamKey::new(3, StreamFamily::Particles);
        let x0 = state(&b, 0.5);
        let traj = simulate_path(&x0, &cfg, &model, key).unwrap();
        let mut cloud = ParticleCloud::uniform(vec![x0]).unwrap();
        for n in 1..=3 {
            cloud = pf_propagate(&cloud, &cfg, &model, key).unwrap();
            assert_eq!(cloud.particles[0], traj.states[n]);
        }
    }

    #[test]
    fn guard_freezes_particle() {
        let b = basis();
        let model = SignalModel::new(b.clone(), NoiseSpec::silent(b.num_modes())).unwrap();
        let cfg = PathConfig { dt: 0.01, t_end: 1.0, guard_lambda: 1.5, guard_order: 1, seed: 0 };
        let cloud = ParticleCloud::uniform(vec![state(&b, 0.1), state(&b, 1.499)]).unwrap();
        let key = StreamKey::new(0, StreamFamily::Particles);
        let next = pf_propagate(&cloud, &cfg, &model, key).unwrap();
        assert!(next.log_weights[0].is_finite());
        assert_eq!(next.log_weights[1], f64::NEG_INFINITY);
        let (normed, _) = pf_normalize(&next).unwrap();
        assert_eq!(normed.weights(), vec![1.0, 0.0]);
        let r = pf_resample(&normed, 0.5, StreamKey::new(0, StreamFamily::Resample)).unwrap();
        assert!(r.log_weights.iter().all(|l| l.is_finite()));
    }
}
