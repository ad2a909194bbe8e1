//! Observation models in both conventions, `dY = h(X) dt + dZ` and
//! `Y = ζ(X) + e`, and the per-step log-likelihood factors the filters consume.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::noise::StreamKey;
use crate::spectral::{Component, FieldState, SpectralBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Re,
    Im,
}

impl Part {
    fn of(self, z: Complex64) -> f64 {
        match self {
            Part::Re => z.re,
            Part::Im => z.im,
        }
    }
}

/// One scalar sensor reading a field state.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    /// Real or imaginary part of a single spectral coefficient.
    Mode { component: Component, index: usize, part: Part },
    /// Real or imaginary part of the field value at grid point `point`.
    GridPoint { component: Component, point: usize, part: Part },
    /// `Re Σ_k conj(w_k) c_k`.
    Window { component: Component, weights: Vec<Complex64> },
    /// `|u(x_j)|²`; the only nonlinear sensor.
    GridIntensity { component: Component, point: usize },
}

impl Functional {
    pub fn is_linear(&self) -> bool {
        !matches!(self, Functional::GridIntensity { .. })
    }

    fn component(&self) -> Component {
        match self {
            Functional::Mode { component, .. }
            | Functional::GridPoint { component, .. }
            | Functional::Window { component, .. }
            | Functional::GridIntensity { component, .. } => *component,
        }
    }
}

/// Precomputed evaluation form of a [`Functional`].
#[derive(Debug, Clone)]
enum Reader {
    Mode { component: Component, index: usize, part: Part },
    /// `Σ_k conj(w_k) c_k`, then a part (or the squared modulus).
    Dot { component: Component, weights: Vec<Complex64>, output: DotOutput },
}

#[derive(Debug, Clone, Copy)]
enum DotOutput {
    Part(Part),
    Intensity,
}

impl Reader {
    fn eval(&self, state: &FieldState) -> f64 {
        let comp = |c: Component| state.component(c).expect("validated component");
        match self {
            Reader::Mode { component, index, part } => part.of(comp(*component)[*index]),
            Reader::Dot { component, weights, output } => {
                let z: Complex64 =
                    weights.iter().zip(comp(*component)).map(|(w, c)| w.conj() * c).sum();
                match output {
                    DotOutput::Part(p) => p.of(z),
                    DotOutput::Intensity => z.norm_sqr(),
                }
            }
        }
    }
}

/// The sensor map `h` together with the observation-noise covariance.
#[derive(Debug, Clone)]
pub struct ObservationOperator {
    functionals: Vec<Functional>,
    readers: Vec<Reader>,
    noise_cov: DMatrix<f64>,
    noise_sqrt: DMatrix<f64>,
    precision: Option<DMatrix<f64>>,
    identity_noise: bool,
    linear: Option<DMatrix<f64>>,
}

/// Linear observation `h` as a dense matrix on real coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObservation {
    pub h: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
    pub precision: DMatrix<f64>,
}

impl LinearObservation {
    /// `h` with identity noise covariance.
    pub fn new(h: DMatrix<f64>) -> Self {
        let n = h.nrows();
        Self { h, noise_cov: DMatrix::identity(n, n), precision: DMatrix::identity(n, n) }
    }

    pub fn with_noise_cov(h: DMatrix<f64>, noise_cov: DMatrix<f64>) -> Result<Self> {
        let chol = spd_cholesky(&noise_cov)?;
        Ok(Self { h, precision: chol.inverse(), noise_cov })
    }

    /// `hᵀ R⁻¹ h`.
    pub fn information(&self) -> DMatrix<f64> {
        self.h.transpose() * &self.precision * &self.h
    }
}

fn spd_cholesky(cov: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if !cov.is_square() || (cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
        return Err(Error::InvalidArgument("noise covariance must be square and symmetric".into()));
    }
    Cholesky::new(cov.clone())
        .ok_or_else(|| Error::InvalidArgument("noise covariance must be positive definite".into()))
}

impl ObservationOperator {
    /// Sensors with identity noise covariance (a standard Wiener `Z`).
    pub fn new(functionals: Vec<Functional>, basis: &SpectralBasis) -> Result<Self> {
        if functionals.is_empty() {
            return Err(Error::InvalidArgument("observation operator needs at least one functional".into()));
        }
        let m = basis.num_modes();
        let second_order = basis.spec().is_second_order();
        let mut readers = Vec::with_capacity(functionals.len());
        for f in &functionals {
            if f.component() == Component::Secondary && !second_order {
                return Err(Error::InvalidArgument(
                    "secondary component only exists for second-order models".into(),
                ));
            }
            readers.push(match f {
                Functional::Mode { component, index, part } => {
                    if *index >= m {
                        return Err(Error::InvalidArgument(format!("mode index {index} >= {m}")));
                    }
                    Reader::Mode { component: *component, index: *index, part: *part }
                }
                Functional::Window { component, weights } => {
                    if weights.len() != m {
                        return Err(Error::DimensionMismatch(format!("window needs {m} weights")));
                    }
                    Reader::Dot {
                        component: *component,
                        weights: weights.clone(),
                        output: DotOutput::Part(Part::Re),
                    }
                }
                Functional::GridPoint { component, point, .. }
                | Functional::GridIntensity { component, point } => {
                    if *point >= m {
                        return Err(Error::InvalidArgument(format!("grid point {point} >= {m}")));
                    }
                    // u(x_j) = Σ_k c_k e^{2πi k·j/n}, so w_k = e^{-2πi k·j/n}.
                    let mut delta = vec![Complex64::new(0.0, 0.0); m];
                    delta[*point] = Complex64::new(1.0, 0.0);
                    let weights = basis.to_spectral(&delta).iter().map(|w| w * m as f64).collect();
                    let output = match f {
                        Functional::GridPoint { part, .. } => DotOutput::Part(*part),
                        _ => DotOutput::Intensity,
                    };
                    Reader::Dot { component: *component, weights, output }
                }
            });
        }
        let n = functionals.len();
        let mut op = Self {
            functionals,
            readers,
            noise_cov: DMatrix::identity(n, n),
            noise_sqrt: DMatrix::identity(n, n),
            precision: Some(DMatrix::identity(n, n)),
            identity_noise: true,
            linear: None,
        };
        if op.is_linear() {
            let nr = basis.real_dim();
            let mut h = DMatrix::zeros(n, nr);
            let mut e = vec![0.0; nr];
            for col in 0..nr {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[col] = 1.0;
                let s = basis.from_real(&e, 0.0)?;
                for (row, r) in op.readers.iter().enumerate() {
                    h[(row, col)] = r.eval(&s);
                }
            }
            op.linear = Some(h);
        }
        Ok(op)
    }

    /// Replaces the noise covariance; it must be symmetric positive definite.
    pub fn with_noise_cov(mut self, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != self.obs_dim() {
            return Err(Error::DimensionMismatch("noise covariance size must equal obs_dim".into()));
        }
        let chol = spd_cholesky(&cov)?;
        self.noise_sqrt = chol.l();
        self.precision = Some(chol.inverse());
        self.identity_noise = cov == DMatrix::identity(cov.nrows(), cov.nrows());
        self.noise_cov = cov;
        Ok(self)
    }

    /// Test hook: observations without noise. Likelihoods are unavailable.
    pub fn noiseless(mut self) -> Self {
        let n = self.obs_dim();
        self.noise_cov = DMatrix::zeros(n, n);
        self.noise_sqrt = DMatrix::zeros(n, n);
        self.precision = None;
        self.identity_noise = false;
        self
    }

    pub fn obs_dim(&self) -> usize {
        self.functionals.len()
    }

    pub fn functionals(&self) -> &[Functional] {
        &self.functionals
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    pub fn is_linear(&self) -> bool {
        self.functionals.iter().all(Functional::is_linear)
    }

    /// `h(x)`.
    pub fn evaluate(&self, state: &FieldState) -> Vec<f64> {
        self.readers.iter().map(|r| r.eval(state)).collect()
    }

    pub fn linear(&self) -> Result<LinearObservation> {
        let h = self.linear.clone().ok_or(Error::NonlinearObservation)?;
        let precision = self.precision.clone().ok_or(Error::NoiselessObservation)?;
        Ok(LinearObservation { h, noise_cov: self.noise_cov.clone(), precision })
    }

    /// Spectral norm of the linear sensor matrix, the constant `C` in `|h(x)| ≤ C‖x‖`.
    pub fn operator_norm(&self) -> Result<f64> {
        let h = self.linear.as_ref().ok_or(Error::NonlinearObservation)?;
        Ok(h.singular_values().max())
    }

    fn weighted_dot(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if self.identity_noise {
            return Ok(a.iter().zip(b).map(|(x, y)| x * y).sum());
        }
        let p = self.precision.as_ref().ok_or(Error::NoiselessObservation)?;
        let av = DVector::from_column_slice(a);
        let bv = DVector::from_column_slice(b);
        Ok(av.dot(&(p * bv)))
    }

    /// `⟨h, dY⟩_R − ½ |h|²_R dt` from an already evaluated `h(x)`.
    pub fn log_increment_ito_from(&self, hx: &[f64], dy: &[f64], dt: f64) -> Result<f64> {
        if dy.len() != hx.len() {
            return Err(Error::DimensionMismatch("observation increment length".into()));
        }
        Ok(self.weighted_dot(hx, dy)? - 0.5 * self.weighted_dot(hx, hx)? * dt)
    }

    /// `(⟨ζ, Y⟩_R − ½ ‖ζ‖²_R) dt` from an already evaluated `ζ(x)`.
    pub fn log_increment_wn_from(&self, zx: &[f64], y: &[f64], dt: f64) -> Result<f64> {
        if y.len() != zx.len() {
            return Err(Error::DimensionMismatch("observation sample length".into()));
        }
        Ok((self.weighted_dot(zx, y)? - 0.5 * self.weighted_dot(zx, zx)?) * dt)
    }

    fn noise_sample(&self, key: &StreamKey, step: u64) -> Vec<f64> {
        let mut rng = key.rng_at(step);
        let xi: DVector<f64> =
            DVector::from_iterator(self.obs_dim(), (0..self.obs_dim()).map(|_| StandardNormal.sample(&mut rng)));
        (&self.noise_sqrt * xi).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationMode {
    /// Entries are increments `ΔY_n`.
    Ito,
    /// Entries are white-noise samples `Y_n`.
    WhiteNoise,
}

/// Observations at the trajectory's grid times `t_1, …, t_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub mode: ObservationMode,
    pub dt: f64,
}

impl ObservationRecord {
    /// The record as Itô increments (`ΔY_n = Y_n dt` for white-noise records).
    pub fn increments(&self) -> Vec<Vec<f64>> {
        match self.mode {
            ObservationMode::Ito => self.values.clone(),
            ObservationMode::WhiteNoise => self
                .values
                .iter()
                .map(|y| y.iter().map(|v| v * self.dt).collect())
                .collect(),
        }
    }
}

fn check_traj(traj: &Trajectory) -> Result<()> {
    if traj.states.is_empty() {
        return Err(Error::InvalidArgument("trajectory is empty".into()));
    }
    Ok(())
}

/// `ΔY_n = h(X_n) dt + sqrt(dt) R^{1/2} ξ_n`, with `ξ_n` drawn from `stream.rng_at(n)`.
pub fn observe_ito(traj: &Trajectory, op: &ObservationOperator, stream: StreamKey) -> Result<ObservationRecord> {
    check_traj(traj)?;
    let dt = traj.dt;
    let sq = dt.sqrt();
    let values = traj.states[1..]
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let noise = op.noise_sample(&stream, i as u64 + 1);
            op.evaluate(x).iter().zip(&noise).map(|(h, e)| h * dt + sq * e).collect()
        })
        .collect();
    Ok(ObservationRecord { times: traj.times[1..].to_vec(), values, mode: ObservationMode::Ito, dt })
}

/// `Y_n = ζ(X_n) + R^{1/2} ξ_n / sqrt(dt)`; same noise draws as [`observe_ito`].
pub fn observe_whitenoise(
    traj: &Trajectory,
    op: &ObservationOperator,
    stream: StreamKey,
) -> Result<ObservationRecord> {
    check_traj(traj)?;
    let dt = traj.dt;
    let sq = dt.sqrt();
    let values = traj.states[1..]
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let noise = op.noise_sample(&stream, i as u64 + 1);
            op.evaluate(x).iter().zip(&noise).map(|(z, e)| z + e / sq).collect()
        })
        .collect();
    Ok(ObservationRecord {
        times: traj.times[1..].to_vec(),
        values,
        mode: ObservationMode::WhiteNoise,
        dt,
    })
}

/// Kallianpur-Striebel exponent of one step: `h(x)·dY − ½|h(x)|² dt`.
pub fn likelihood_log_increment_ito(
    x: &FieldState,
    dy: &[f64],
    dt: f64,
    op: &ObservationOperator,
) -> Result<f64> {
    op.log_increment_ito_from(&op.evaluate(x), dy, dt)
}

/// Riemann-sum exponent of the white-noise likelihood: `(⟨ζ(x), Y⟩ − ½‖ζ(x)‖²) dt`.
pub fn likelihood_log_increment_wn(
    x: &FieldState,
    y: &[f64],
    dt: f64,
    op: &ObservationOperator,
) -> Result<f64> {
    op.log_increment_wn_from(&op.evaluate(x), y, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, ModelSpec};

    fn basis() -> SpectralBasis {
        build_basis(&ModelSpec::paraxial(1, 4)).unwrap()
    }

    #[test]
    fn empty_operator_is_rejected() {
        assert!(ObservationOperator::new(vec![], &basis()).is_err());
    }

    #[test]
    fn grid_point_reads_physical_value() {
        let b = basis();
        let mut s = FieldState::zeros(&b);
        s.primary[1] = Complex64::new(0.3, 0.1);
        s.primary[3] = Complex64::new(-0.2, 0.5);
        let grid = b.to_physical(&s.primary);
        let op = ObservationOperator::new(
            vec![
                Functional::GridPoint { component: Component::Primary, point: 2, part: Part::Re },
                Functional::GridPoint { component: Component::Primary, point: 1, part: Part::Im },
                Functional::GridIntensity { component: Component::Primary, point: 3 },
            ],
            &b,
        )
        .unwrap();
        let h = op.evaluate(&s);
        assert!((h[0] - grid[2].re).abs() < 1e-14);
        assert!((h[1] - grid[1].im).abs() < 1e-14);
        assert!((h[2] - grid[3].norm_sqr()).abs() < 1e-14);
        assert!(!op.is_linear());
        assert_eq!(op.linear().unwrap_err(), Error::NonlinearObservation);
    }

    #[test]
    fn linear_matrix_agrees_with_evaluation() {
        let b = basis();
        let op = ObservationOperator::new(
            vec![
                Functional::Mode { component: Component::Primary, index: 1, part: Part::Im },
                Functional::GridPoint { component: Component::Primary, point: 0, part: Part::Re },
            ],
            &b,
        )
        .unwrap();
        let lin = op.linear().unwrap();
        let x: Vec<f64> = (0..b.real_dim()).map(|i| (i as f64 + 0.5).sin()).collect();
        let s = b.from_real(&x, 0.0).unwrap();
        let direct = op.evaluate(&s);
        let via = &lin.h * DVector::from_vec(x.clone());
        for (a, c) in direct.iter().zip(via.iter()) {
            assert!((a - c).abs() < 1e-14);
        }
        let norm = op.operator_norm().unwrap();
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(direct.iter().map(|v| v * v).sum::<f64>().sqrt() <= norm * xn * (1.0 + 1e-12));
    }

    #[test]
    fn likelihood_direct_formulas() {
        let b = basis();
        let op = ObservationOperator::new(
            vec![Functional::Mode { component: Component::Primary, index: 0, part: Part::Re }],
            &b,
        )
        .unwrap();
        let zero = FieldState::zeros(&b);
        assert_eq!(likelihood_log_increment_ito(&zero, &[0.7], 0.1, &op).unwrap(), 0.0);
        assert_eq!(likelihood_log_increment_wn(&zero, &[0.7], 0.1, &op).unwrap(), 0.0);
        let mut one = FieldState::zeros(&b);
        one.primary[0] = Complex64::new(1.0, 0.0);
        let ito = likelihood_log_increment_ito(&one, &[0.3], 0.1, &op).unwrap();
        assert!((ito - 0.25).abs() < 1e-15);
        let wn = likelihood_log_increment_wn(&one, &[2.0], 0.1, &op).unwrap();
        assert!((wn - 0.15).abs() < 1e-15);
    }

    #[test]
    fn weighted_likelihood_uses_precision() {
        let b = basis();
        let op = ObservationOperator::new(
            vec![Functional::Mode { component: Component::Primary, index: 0, part: Part::Re }],
            &b,
        )
        .unwrap()
        .with_noise_cov(DMatrix::from_element(1, 1, 4.0))
        .unwrap();
        let mut one = FieldState::zeros(&b);
        one.primary[0] = Complex64::new(1.0, 0.0);
        let v = likelihood_log_increment_ito(&one, &[0.3], 0.1, &op).unwrap();
        assert!((v - 0.25 / 4.0).abs() < 1e-15);
        assert!(ObservationOperator::new(
            vec![Functional::Mode { component: Component::Primary, index: 0, part: Part::Re }],
            &b
        )
        .unwrap()
        .with_noise_cov(DMatrix::from_element(1, 1, -1.0))
        .is_err());
    }

    #[test]
    fn secondary_sensor_needs_second_order_model() {
        let err = ObservationOperator::new(
            vec![Functional::Mode { component: Component::Secondary, index: 0, part: Part::Re }],
            &basis(),
        );
        assert!(err.is_err());
    }
}
