//! Exponential-Euler integration of the mild form
//! `φ(t) = e^{-iAt}φ(0) + ∫ e^{-iA(t-s)} J(φ) ds + ∫ e^{-iA(t-s)} φ dM`
//! with a post-step blow-up guard on the monitored norms `‖A^j φ‖`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::noise::{sample_levy_increment, NoiseCoupling, NoiseIncrement, NoiseSpec, StreamKey};
use crate::spectral::{
    apply_free_propagator, eval_nonlinearity, sobolev_norm, FieldState, SpectralBasis,
};

/// A wave model together with its driving noise.
#[derive(Debug, Clone)]
pub struct SignalModel {
    pub basis: SpectralBasis,
    pub noise: NoiseSpec,
}

impl SignalModel {
    pub fn new(basis: SpectralBasis, noise: NoiseSpec) -> Result<Self> {
        noise.validate(basis.num_modes())?;
        Ok(Self { basis, noise })
    }

    fn noise_target_offset(&self) -> usize {
        if self.basis.spec().is_second_order() {
            2 * self.basis.num_modes()
        } else {
            0
        }
    }

    /// Real-ified per-unit-time covariance of the noise coefficients:
    /// `(Re, Im)` of mode `i` get `λ_i/2 + μ_i E[a_i²]` and `λ_i/2`.
    pub fn noise_coefficient_covariance(&self) -> DVector<f64> {
        let m = self.basis.num_modes();
        let lam = self.noise.jump.lambda_matrix();
        let mut d = DVector::zeros(2 * m);
        for i in 0..m {
            d[2 * i] = 0.5 * self.noise.wiener.lambdas[i] + lam[(i, i)];
            d[2 * i + 1] = 0.5 * self.noise.wiener.lambdas[i];
        }
        d
    }

    /// Forcing matrix `F = B (Q + Λ) B*` in real coordinates. For multiplicative
    /// coupling `B` is the multiplication by `about` (linearized noise `X₀ dM`).
    pub fn forcing_matrix(&self, about: &FieldState) -> DMatrix<f64> {
        let m = self.basis.num_modes();
        let nr = self.basis.real_dim();
        let offset = self.noise_target_offset();
        let sigma = self.noise_coefficient_covariance();
        // Columns of the real-ified coupling map from noise coefficients to state.
        let mut coupling = DMatrix::zeros(nr, 2 * m);
        match &self.noise.coupling {
            NoiseCoupling::Additive { scale } => {
                for i in 0..m {
                    coupling[(offset + 2 * i, 2 * i)] = scale[i];
                    coupling[(offset + 2 * i + 1, 2 * i + 1)] = scale[i];
                }
            }
            NoiseCoupling::Multiplicative => {
                let mut unit = vec![Complex64::new(0.0, 0.0); m];
                for col in 0..2 * m {
                    unit.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                    unit[col / 2] =
                        if col % 2 == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
                    let resp = self.basis.pointwise_product(&about.primary, &unit);
                    for (k, c) in resp.iter().enumerate() {
                        coupling[(offset + 2 * k, col)] = c.re;
                        coupling[(offset + 2 * k + 1, col)] = c.im;
                    }
                }
            }
        }
        let weighted = &coupling * DMatrix::from_diagonal(&sigma);
        let f = &weighted * coupling.transpose();
        (&f + f.transpose()) * 0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Blow-up threshold `Λ` on `sup_j ‖A^j φ‖`.
    pub guard_lambda: f64,
    /// Number of monitored Sobolev levels `j = 0, …, N_g − 1`.
    pub guard_order: u32,
    pub seed: u64,
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(Error::InvalidArgument("t_end must be finite and >= dt".into()));
        }
        if !(self.guard_lambda > 0.0) {
            return Err(Error::InvalidArgument("guard_lambda must be > 0".into()));
        }
        if !(1..=5).contains(&self.guard_order) {
            return Err(Error::InvalidArgument("guard_order must lie in 1..=5".into()));
        }
        Ok(())
    }

    pub fn num_steps(&self) -> u64 {
        (self.t_end / self.dt).round().max(1.0) as u64
    }

    /// `sup_{0 ≤ j < N_g} ‖A^j φ‖ > Λ`. Non-finite states always trip.
    pub fn guard_tripped(&self, state: &FieldState, basis: &SpectralBasis) -> bool {
        if !state.is_finite() {
            return true;
        }
        (0..self.guard_order).any(|j| {
            let norm = sobolev_norm(state, basis, j).unwrap_or(f64::INFINITY);
            !(norm <= self.guard_lambda)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FieldState>,
    pub dt: f64,
    /// Grid time at which the guard fired; the offending state is the last one kept.
    pub stopped_at: Option<f64>,
}

/// One exponential-Euler step
/// `φ_{n+1} = e^{-iA dt}(φ_n + J(φ_n) dt + noise(φ_n, ΔM_n))`.
pub fn step_mild(
    state: &FieldState,
    dt: f64,
    increment: &NoiseIncrement,
    model: &SignalModel,
) -> Result<FieldState> {
    if (increment.dt - dt).abs() > 1e-12 * dt.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "increment dt {} does not match step dt {dt}",
            increment.dt
        )));
    }
    let basis = &model.basis;
    let mut pre = if basis.spec().linear {
        state.clone()
    } else {
        state.axpy(dt, &eval_nonlinearity(state, basis))
    };

    if !increment.is_zero() {
        let dm = increment.total();
        let kick: Vec<Complex64> = match &model.noise.coupling {
            NoiseCoupling::Multiplicative => basis.pointwise_product(&state.primary, &dm),
            NoiseCoupling::Additive { scale } => dm.iter().zip(scale).map(|(c, s)| c * *s).collect(),
        };
        let target = match pre.secondary.as_mut() {
            Some(v) => v,
            None => &mut pre.primary,
        };
        target.iter_mut().zip(&kick).for_each(|(t, k)| *t += k);
    }

    let next = apply_free_propagator(&pre, basis, dt)?;
    if !next.is_finite() {
        return Err(Error::NonFinite { step: (state.time / dt).round() as u64 + 1, time: next.time });
    }
    Ok(next)
}

/// Iterates [`step_mild`], drawing step `n`'s increment from `stream.rng_at(n)`,
/// and truncates the path when the guard trips.
pub fn simulate_path(
    x0: &FieldState,
    config: &PathConfig,
    model: &SignalModel,
    stream: StreamKey,
) -> Result<Trajectory> {
    config.validate()?;
    x0.validate(&model.basis)?;
    let steps = config.num_steps();
    let t0 = x0.time;
    let mut times = vec![t0];
    let mut states = vec![x0.clone()];
    let mut stopped_at = None;
    let mut current = x0.clone();
    for n in 1..=steps {
        let mut rng = stream.rng_at(n);
        let inc = sample_levy_increment(&model.noise.wiener, &model.noise.jump, config.dt, &mut rng)?;
        let mut next = step_mild(&current, config.dt, &inc, model)?;
        next.time = t0 + n as f64 * config.dt;
        times.push(next.time);
        let tripped = config.guard_tripped(&next, &model.basis);
        states.push(next.clone());
        if tripped {
            stopped_at = Some(next.time);
            break;
        }
        current = next;
    }
    Ok(Trajectory { times, states, dt: config.dt, stopped_at })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{JumpSpec, StreamFamily, WienerSpec};
    use crate::spectral::{build_basis, ModelSpec};

    fn silent_model(spec: ModelSpec) -> SignalModel {
        let basis = build_basis(&spec).unwrap();
        let m = basis.num_modes();
        SignalModel::new(basis, NoiseSpec::silent(m)).unwrap()
    }

    fn config(dt: f64, t_end: f64, guard: f64) -> PathConfig {
        PathConfig { dt, t_end, guard_lambda: guard, guard_order: 1, seed: 0 }
    }

    #[test]
    fn free_step_is_free_propagation() {
        let mut spec = ModelSpec::paraxial(1, 4);
        spec.linear = true;
        let model = silent_model(spec);
        let mut s = FieldState::zeros(&model.basis);
        s.primary[1] = Complex64::new(0.3, -0.2);
        let inc = NoiseIncrement::zero(4, 0.1);
        let a = step_mild(&s, 0.1, &inc, &model).unwrap();
        let b = apply_free_propagator(&s, &model.basis, 0.1).unwrap();
        assert_eq!(a, b);
        assert!(step_mild(&s, 0.2, &inc, &model).is_err());
    }

    #[test]
    fn small_dt_difference_quotient_matches_drift() {
        let model = silent_model(ModelSpec::paraxial(1, 4));
        let k = model.basis.mode_index(&[1]).unwrap();
        let mut s = FieldState::zeros(&model.basis);
        s.primary[k] = Complex64::new(0.4, 0.1);
        let j = eval_nonlinearity(&s, &model.basis);
        let drift: Vec<Complex64> = s
            .primary
            .iter()
            .zip(&j.primary)
            .zip(model.basis.eig_a())
            .map(|((c, jc), e)| Complex64::new(0.0, -e) * c + jc)
            .collect();
        let mut errs = Vec::new();
        for dt in [1e-2, 1e-3, 1e-4] {
            let next = step_mild(&s, dt, &NoiseIncrement::zero(4, dt), &model).unwrap();
            let err: f64 = next
                .primary
                .iter()
                .zip(&s.primary)
                .zip(&drift)
                .map(|((n, o), d)| ((n - o) / dt - d).norm())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[2] < 1e-3);
        assert!(errs[1] / errs[2] > 8.0 && errs[0] / errs[1] > 8.0, "{errs:?}");
    }

    #[test]
    fn zero_noise_linear_path_keeps_norm() {
        let mut spec = ModelSpec::paraxial(2, 4);
        spec.linear = true;
        let model = silent_model(spec);
        let mut s = FieldState::zeros(&model.basis);
        for (i, c) in s.primary.iter_mut().enumerate() {
            *c = Complex64::new((i as f64).cos(), 0.1 * i as f64);
        }
        let n0 = sobolev_norm(&s, &model.basis, 0).unwrap();
        let traj = simulate_path(&s, &config(0.01, 1.0, 1e6), &model, StreamKey::new(3, StreamFamily::Signal)).unwrap();
        assert_eq!(traj.states.len(), 101);
        assert!(traj.stopped_at.is_none());
        for st in &traj.states {
            assert!((sobolev_norm(st, &model.basis, 0).unwrap() - n0).abs() < 1e-12 * n0);
        }
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn guard_below_initial_norm_stops_first_step() {
        let model = silent_model(ModelSpec::paraxial(1, 4));
        let mut s = FieldState::zeros(&model.basis);
        s.primary[0] = Complex64::new(1.0, 0.0);
        let traj = simulate_path(&s, &config(0.01, 1.0, 0.5), &model, StreamKey::new(0, StreamFamily::Signal)).unwrap();
        assert_eq!(traj.stopped_at, Some(0.01));
        assert_eq!(traj.states.len(), 2);
    }

    #[test]
    fn focusing_blows_up_defocusing_completes() {
        let mut spec = ModelSpec::paraxial(1, 4);
        let mut x0 = FieldState::zeros(&build_basis(&spec).unwrap());
        x0.primary[0] = Complex64::new(2.0, 0.0);
        let cfg = config(1e-3, 1.0, 100.0);
        let focusing = simulate_path(&x0, &cfg, &silent_model(spec.clone()), StreamKey::new(0, StreamFamily::Signal)).unwrap();
        let t_stop = focusing.stopped_at.expect("focusing path should stop");
        // Real-form blow-up time of a' = a³ from a = 2 is 1/8.
        assert!(t_stop > 0.1 && t_stop < 0.2, "{t_stop}");
        spec.sign = -1.0;
        let defocusing = simulate_path(&x0, &cfg, &silent_model(spec), StreamKey::new(0, StreamFamily::Signal)).unwrap();
        assert!(defocusing.stopped_at.is_none());
        assert_eq!(*defocusing.times.last().unwrap(), 1.0);
    }

    #[test]
    fn paths_do_not_anticipate_future_noise() {
        let basis = build_basis(&ModelSpec::paraxial(1, 4)).unwrap();
        let noise = NoiseSpec {
            wiener: WienerSpec { lambdas: vec![0.2; 4] },
            jump: JumpSpec::fixed(vec![1.0; 4], vec![0.1; 4]),
            coupling: NoiseCoupling::Multiplicative,
        };
        let model = SignalModel::new(basis, noise).unwrap();
        let mut x0 = FieldState::zeros(&model.basis);
        x0.primary[0] = Complex64::new(0.5, 0.0);
        x0.primary[1] = Complex64::new(0.0, 0.2);
        let key = StreamKey::new(42, StreamFamily::Signal);
        let short = simulate_path(&x0, &config(0.01, 0.3, 1e6), &model, key).unwrap();
        let long = simulate_path(&x0, &config(0.01, 1.0, 1e6), &model, key).unwrap();
        assert_eq!(short.states[..], long.states[..short.states.len()]);
        let again = simulate_path(&x0, &config(0.01, 1.0, 1e6), &model, key).unwrap();
        assert_eq!(long, again);
    }

    #[test]
    fn additive_forcing_matrix_matches_noise_covariance() {
        let basis = build_basis(&ModelSpec::klein_gordon(1, 2, 1.0)).unwrap();
        let noise = NoiseSpec {
            wiener: WienerSpec { lambdas: vec![0.4, 0.2] },
            jump: JumpSpec::fixed(vec![2.0, 0.0], vec![0.5, 0.0]),
            coupling: NoiseCoupling::Additive { scale: vec![1.0, 3.0] },
        };
        let model = SignalModel::new(basis, noise).unwrap();
        let f = model.forcing_matrix(&FieldState::zeros(&model.basis));
        // v-block starts at real index 4.
        let want = [0.2 + 0.5, 0.2, 9.0 * 0.1, 9.0 * 0.1];
        for (i, w) in want.iter().enumerate() {
            assert!((f[(4 + i, 4 + i)] - w).abs() < 1e-14);
        }
        assert!(f.view((0, 0), (4, 4)).amax() == 0.0);
    }
}
