//! Truncated trigonometric representation of the wave models.
//!
//! Fields live on a periodic box `[0, L)^d` and are stored as complex Fourier
//! coefficients `c_k` over the centered lattice `k ∈ {-n/2, …, n/2-1}^d`, kept in
//! FFT order. The physical grid values are `u(x_j) = Σ_k c_k exp(2πi k·j/n)`, so
//! the coefficient ℓ² norm equals the root-mean-square of the grid values.
//!
//! Second-order models (Klein-Gordon, sine-Gordon) carry the pair `(ψ, v = ∂ₜψ)`.
//! Their real-ified coordinates use the energy scaling `(ω_k ψ_k, v_k)` so that the
//! Euclidean norm of the real vector is the norm of `D(B) ⊕ L²` and the generator of
//! the free flow is a skew matrix.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Which semilinear wave model the basis represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `∂ₜψ = iΔψ + s|ψ|^{p-1}ψ`.
    ParaxialNls,
    /// `∂ₜ(ψ, v) = (v, -B²ψ + s|ψ|^{p-1}ψ)`, `B = sqrt(-Δ + k₀²)`.
    KleinGordon,
    /// `∂ₜ(u, v) = (v, -B²u + g sin u)`.
    SineGordon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Odd exponent of the power nonlinearity `|ψ|^{p-1}ψ`.
    pub power: u32,
    /// `+1` focusing, `-1` defocusing.
    pub sign: f64,
    /// Mass parameter of `B = sqrt(-Δ + k₀²)`.
    pub k0: f64,
    /// Sine-Gordon coupling.
    pub g: f64,
    pub dimension: usize,
    pub modes_per_dim: usize,
    pub domain_length: f64,
    /// Apply the 2/3 rule to the input and output of the nonlinearity.
    pub dealias: bool,
    /// Drop the nonlinearity entirely (`J ≡ 0`).
    pub linear: bool,
}

impl ModelSpec {
    /// Cubic focusing paraxial model on a `[0, 2π)^d` box.
    pub fn paraxial(dimension: usize, modes_per_dim: usize) -> Self {
        Self {
            kind: ModelKind::ParaxialNls,
            power: 3,
            sign: 1.0,
            k0: 0.0,
            g: 0.0,
            dimension,
            modes_per_dim,
            domain_length: 2.0 * std::f64::consts::PI,
            dealias: false,
            linear: false,
        }
    }

    pub fn klein_gordon(dimension: usize, modes_per_dim: usize, k0: f64) -> Self {
        Self {
            kind: ModelKind::KleinGordon,
            k0,
            ..Self::paraxial(dimension, modes_per_dim)
        }
    }

    pub fn sine_gordon(dimension: usize, modes_per_dim: usize, k0: f64, g: f64) -> Self {
        Self {
            kind: ModelKind::SineGordon,
            k0,
            g,
            ..Self::paraxial(dimension, modes_per_dim)
        }
    }

    pub fn is_second_order(&self) -> bool {
        self.kind != ModelKind::ParaxialNls
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.power < 3 || self.power.is_multiple_of(2) {
            return bad(format!("power must be an odd integer >= 3, got {}", self.power));
        }
        if self.sign != 1.0 && self.sign != -1.0 {
            return bad(format!("sign must be +1 or -1, got {}", self.sign));
        }
        if !(self.k0.is_finite() && self.k0 >= 0.0) {
            return bad(format!("k0 must be finite and >= 0, got {}", self.k0));
        }
        if self.is_second_order() && self.k0 <= 0.0 {
            return bad("Klein-Gordon and sine-Gordon need k0 > 0 (B must be invertible)".into());
        }
        if !self.g.is_finite() {
            return bad("g must be finite".into());
        }
        if !(self.dimension == 1 || self.dimension == 2) {
            return bad(format!("dimension must be 1 or 2, got {}", self.dimension));
        }
        if self.modes_per_dim < 2 || !self.modes_per_dim.is_multiple_of(2) {
            return bad(format!(
                "modes_per_dim must be an even integer >= 2, got {}",
                self.modes_per_dim
            ));
        }
        if !(self.domain_length.is_finite() && self.domain_length > 0.0) {
            return bad(format!("domain_length must be > 0, got {}", self.domain_length));
        }
        Ok(())
    }
}

/// Which half of a field state a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    /// `ψ` (or `u` for sine-Gordon).
    Primary,
    /// `v = ∂ₜψ`; only present for second-order models.
    Secondary,
}

/// Field coefficients at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub primary: Vec<Complex64>,
    pub secondary: Option<Vec<Complex64>>,
    pub time: f64,
}

impl FieldState {
    pub fn zeros(basis: &SpectralBasis) -> Self {
        let m = basis.num_modes();
        Self {
            primary: vec![Complex64::new(0.0, 0.0); m],
            secondary: basis.spec().is_second_order().then(|| vec![Complex64::new(0.0, 0.0); m]),
            time: 0.0,
        }
    }

    pub fn component(&self, which: Component) -> Option<&[Complex64]> {
        match which {
            Component::Primary => Some(&self.primary),
            Component::Secondary => self.secondary.as_deref(),
        }
    }

    pub fn is_finite(&self) -> bool {
        let ok = |v: &[Complex64]| v.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        ok(&self.primary) && self.secondary.as_deref().is_none_or(ok) && self.time.is_finite()
    }

    /// Checks the layout against `basis` and that every coefficient is finite.
    pub fn validate(&self, basis: &SpectralBasis) -> Result<()> {
        let m = basis.num_modes();
        if self.primary.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "state has {} primary modes, basis has {m}",
                self.primary.len()
            )));
        }
        match (&self.secondary, basis.spec().is_second_order()) {
            (Some(v), true) if v.len() == m => {}
            (None, false) => {}
            _ => {
                return Err(Error::DimensionMismatch(
                    "secondary component must be present exactly for second-order models".into(),
                ))
            }
        }
        if !self.is_finite() {
            return Err(Error::InvalidArgument("state has non-finite coefficients".into()));
        }
        Ok(())
    }

    /// `self + scale * other`, componentwise; the time of `self` is kept.
    pub fn axpy(&self, scale: f64, other: &FieldState) -> FieldState {
        let add = |a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> {
            a.iter().zip(b).map(|(x, y)| x + y * scale).collect()
        };
        FieldState {
            primary: add(&self.primary, &other.primary),
            secondary: match (&self.secondary, &other.secondary) {
                (Some(a), Some(b)) => Some(add(a, b)),
                (a, _) => a.clone(),
            },
            time: self.time,
        }
    }
}

/// Dense real-ified generator `𝒜 = -iA + J'(X₀)` acting on [`SpectralBasis::to_real`]
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedOperator(DMatrix<f64>);

impl LinearizedOperator {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch("linearized operator must be square".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("linearized operator has non-finite entries".into()));
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Lattice, eigenvalues of `A`, and transform plans for one [`ModelSpec`].
#[derive(Clone)]
pub struct SpectralBasis {
    spec: ModelSpec,
    n: usize,
    wavevectors: Vec<Vec<i64>>,
    eig_a: Vec<f64>,
    keep: Vec<bool>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectralBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralBasis")
            .field("spec", &self.spec)
            .field("grid_per_dim", &self.n)
            .field("eig_a", &self.eig_a)
            .finish()
    }
}

fn centered(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Builds the lattice and per-mode eigenvalues for `spec`.
pub fn build_basis(spec: &ModelSpec) -> Result<SpectralBasis> {
    spec.validate()?;
    let n = spec.modes_per_dim;
    let total = n.pow(spec.dimension as u32);
    let unit = 2.0 * std::f64::consts::PI / spec.domain_length;
    let cutoff = n as f64 / 3.0;

    let mut wavevectors = Vec::with_capacity(total);
    let mut eig_a = Vec::with_capacity(total);
    let mut keep = Vec::with_capacity(total);
    for flat in 0..total {
        let k: Vec<i64> = match spec.dimension {
            1 => vec![centered(flat, n)],
            _ => vec![centered(flat / n, n), centered(flat % n, n)],
        };
        let k2: f64 = k.iter().map(|&ki| (unit * ki as f64).powi(2)).sum();
        eig_a.push(match spec.kind {
            ModelKind::ParaxialNls => k2,
            ModelKind::KleinGordon | ModelKind::SineGordon => (k2 + spec.k0 * spec.k0).sqrt(),
        });
        keep.push(k.iter().all(|&ki| (ki.abs() as f64) <= cutoff));
        wavevectors.push(k);
    }

    let mut planner = FftPlanner::new();
    Ok(SpectralBasis {
        spec: spec.clone(),
        n,
        wavevectors,
        eig_a,
        keep,
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    })
}

impl SpectralBasis {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn wavevectors(&self) -> &[Vec<i64>] {
        &self.wavevectors
    }

    /// Per-mode eigenvalues: `|k|²` for the paraxial model, `ω_k` for wave models.
    pub fn eig_a(&self) -> &[f64] {
        &self.eig_a
    }

    /// Number of complex coefficients per component (`modes_per_dim^d`).
    pub fn num_modes(&self) -> usize {
        self.eig_a.len()
    }

    pub fn grid_per_dim(&self) -> usize {
        self.n
    }

    /// Length of the real-ified state vector.
    pub fn real_dim(&self) -> usize {
        let per_component = 2 * self.num_modes();
        if self.spec.is_second_order() {
            2 * per_component
        } else {
            per_component
        }
    }

    /// Index of the spectral coefficient with the given centered wavevector.
    pub fn mode_index(&self, k: &[i64]) -> Option<usize> {
        self.wavevectors.iter().position(|w| w.as_slice() == k)
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        match self.spec.dimension {
            1 => fft.process_with_scratch(data, &mut scratch),
            _ => {
                for row in data.chunks_exact_mut(n) {
                    fft.process_with_scratch(row, &mut scratch);
                }
                let mut column = vec![Complex64::new(0.0, 0.0); n];
                for c in 0..n {
                    for r in 0..n {
                        column[r] = data[r * n + c];
                    }
                    fft.process_with_scratch(&mut column, &mut scratch);
                    for r in 0..n {
                        data[r * n + c] = column[r];
                    }
                }
            }
        }
    }

    /// Coefficients to grid values.
    pub fn to_physical(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut data = coeffs.to_vec();
        self.transform(&mut data, &self.inverse);
        data
    }

    /// Grid values to coefficients; inverse of [`Self::to_physical`].
    pub fn to_spectral(&self, grid: &[Complex64]) -> Vec<Complex64> {
        let mut data = grid.to_vec();
        self.transform(&mut data, &self.forward);
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    fn dealiased(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        if !self.spec.dealias {
            return coeffs.to_vec();
        }
        coeffs
            .iter()
            .zip(&self.keep)
            .map(|(&c, &k)| if k { c } else { Complex64::new(0.0, 0.0) })
            .collect()
    }

    /// Coefficients of the grid-pointwise product of two fields.
    pub fn pointwise_product(&self, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        let ga = self.to_physical(a);
        let gb = self.to_physical(b);
        let prod: Vec<Complex64> = ga.iter().zip(&gb).map(|(x, y)| x * y).collect();
        self.to_spectral(&prod)
    }

    /// Real-ified coordinates, `(Re, Im)` interleaved per mode.
    pub fn to_real(&self, state: &FieldState) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.real_dim());
        match &state.secondary {
            None => {
                for c in &state.primary {
                    out.push(c.re);
                    out.push(c.im);
                }
            }
            Some(v) => {
                for (c, w) in state.primary.iter().zip(&self.eig_a) {
                    out.push(w * c.re);
                    out.push(w * c.im);
                }
                for c in v {
                    out.push(c.re);
                    out.push(c.im);
                }
            }
        }
        out
    }

    /// Inverse of [`Self::to_real`].
    pub fn from_real(&self, x: &[f64], time: f64) -> Result<FieldState> {
        if x.len() != self.real_dim() {
            return Err(Error::DimensionMismatch(format!(
                "real vector has length {}, basis needs {}",
                x.len(),
                self.real_dim()
            )));
        }
        let m = self.num_modes();
        let pairs = |s: &[f64]| -> Vec<Complex64> {
            s.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
        };
        if self.spec.is_second_order() {
            let primary = pairs(&x[..2 * m])
                .into_iter()
                .zip(&self.eig_a)
                .map(|(c, w)| c / *w)
                .collect();
            Ok(FieldState { primary, secondary: Some(pairs(&x[2 * m..])), time })
        } else {
            Ok(FieldState { primary: pairs(x), secondary: None, time })
        }
    }

    /// Free-flow energy `Σ ω_k²|ψ_k|² + |v_k|²` of a second-order state.
    pub fn wave_energy(&self, state: &FieldState) -> f64 {
        let v = state.secondary.as_deref().unwrap_or(&[]);
        let psi: f64 = state
            .primary
            .iter()
            .zip(&self.eig_a)
            .map(|(c, w)| w * w * c.norm_sqr())
            .sum();
        psi + v.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }
}

/// Exact free evolution `e^{-iA dt}`.
///
/// Paraxial: `c_k ↦ exp(-i λ_k dt) c_k`. Wave models: the per-mode block
/// `[[cos ωt, sin ωt / ω], [-ω sin ωt, cos ωt]]` acting on `(ψ_k, v_k)`.
pub fn apply_free_propagator(state: &FieldState, basis: &SpectralBasis, dt: f64) -> Result<FieldState> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be >= 0, got {dt}")));
    }
    let eig = basis.eig_a();
    match &state.secondary {
        None => {
            let primary = state
                .primary
                .iter()
                .zip(eig)
                .map(|(c, &lam)| c * Complex64::from_polar(1.0, -lam * dt))
                .collect();
            Ok(FieldState { primary, secondary: None, time: state.time + dt })
        }
        Some(v) => {
            let mut psi = Vec::with_capacity(v.len());
            let mut vel = Vec::with_capacity(v.len());
            for ((p, q), &w) in state.primary.iter().zip(v).zip(eig) {
                let (s, c) = (w * dt).sin_cos();
                psi.push(p * c + q * (s / w));
                vel.push(-p * (w * s) + q * c);
            }
            Ok(FieldState { primary: psi, secondary: Some(vel), time: state.time + dt })
        }
    }
}

/// Pointwise power nonlinearity `s |z|^{p-1} z`.
fn power_map(z: Complex64, power: u32, sign: f64) -> Complex64 {
    let r2 = z.norm_sqr();
    z * (sign * r2.powi(((power - 1) / 2) as i32))
}

/// Real Jacobian of [`power_map`] with respect to `(Re z, Im z)`.
fn power_jacobian(z: Complex64, power: u32, sign: f64) -> [[f64; 2]; 2] {
    let (a, b) = (z.re, z.im);
    let r2 = a * a + b * b;
    let lead = r2.powi(((power - 1) / 2) as i32);
    let cross = (power - 1) as f64 * r2.powi(((power - 3) / 2) as i32);
    [
        [sign * (lead + cross * a * a), sign * cross * a * b],
        [sign * cross * a * b, sign * (lead + cross * b * b)],
    ]
}

/// The nonlinearity `J(φ)`, evaluated pseudo-spectrally on the collocation grid.
///
/// For second-order models the increment lands only in the `v` component.
pub fn eval_nonlinearity(state: &FieldState, basis: &SpectralBasis) -> FieldState {
    let spec = basis.spec();
    let mut out = FieldState::zeros(basis);
    out.time = state.time;
    if spec.linear {
        return out;
    }
    let grid = basis.to_physical(&basis.dealiased(&state.primary));
    let mapped: Vec<Complex64> = match spec.kind {
        ModelKind::ParaxialNls | ModelKind::KleinGordon => {
            grid.iter().map(|&z| power_map(z, spec.power, spec.sign)).collect()
        }
        ModelKind::SineGordon => grid
            .iter()
            .map(|z| Complex64::new(spec.g * z.re.sin(), spec.g * z.im.sin()))
            .collect(),
    };
    let coeffs = basis.dealiased(&basis.to_spectral(&mapped));
    match spec.kind {
        ModelKind::ParaxialNls => out.primary = coeffs,
        _ => out.secondary = Some(coeffs),
    }
    out
}

/// Real-ified `-iA` alone.
pub fn free_generator(basis: &SpectralBasis) -> LinearizedOperator {
    let nr = basis.real_dim();
    let m = basis.num_modes();
    let mut mat = DMatrix::zeros(nr, nr);
    for (k, &lam) in basis.eig_a().iter().enumerate() {
        if basis.spec().is_second_order() {
            for part in 0..2 {
                let psi = 2 * k + part;
                let vel = 2 * m + 2 * k + part;
                mat[(psi, vel)] = lam;
                mat[(vel, psi)] = -lam;
            }
        } else {
            mat[(2 * k, 2 * k + 1)] = lam;
            mat[(2 * k + 1, 2 * k)] = -lam;
        }
    }
    LinearizedOperator(mat)
}

/// Real-ified `𝒜 = -iA + J'(X₀)` about the state `state0`.
pub fn eval_jacobian(state0: &FieldState, basis: &SpectralBasis) -> LinearizedOperator {
    let mut gen = free_generator(basis);
    let spec = basis.spec();
    if spec.linear {
        return gen;
    }
    let m = basis.num_modes();
    let grid = basis.to_physical(&basis.dealiased(&state0.primary));
    let blocks: Vec<[[f64; 2]; 2]> = grid
        .iter()
        .map(|&z| match spec.kind {
            ModelKind::SineGordon => [[spec.g * z.re.cos(), 0.0], [0.0, spec.g * z.im.cos()]],
            _ => power_jacobian(z, spec.power, spec.sign),
        })
        .collect();

    // J depends on ψ only; in energy coordinates an input unit moves ψ by 1/ω.
    let out_offset = if spec.is_second_order() { 2 * m } else { 0 };
    let mut unit = vec![Complex64::new(0.0, 0.0); m];
    for col in 0..2 * m {
        let k = col / 2;
        let scale = if spec.is_second_order() { 1.0 / basis.eig_a()[k] } else { 1.0 };
        unit.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        unit[k] = if col % 2 == 0 { Complex64::new(scale, 0.0) } else { Complex64::new(0.0, scale) };
        let du = basis.to_physical(&basis.dealiased(&unit));
        let dn: Vec<Complex64> = du
            .iter()
            .zip(&blocks)
            .map(|(d, j)| {
                Complex64::new(j[0][0] * d.re + j[0][1] * d.im, j[1][0] * d.re + j[1][1] * d.im)
            })
            .collect();
        let response = basis.dealiased(&basis.to_spectral(&dn));
        for (row, c) in response.iter().enumerate() {
            gen.0[(out_offset + 2 * row, col)] += c.re;
            gen.0[(out_offset + 2 * row + 1, col)] += c.im;
        }
    }
    gen
}

/// `‖A^j φ‖ = sqrt(Σ_k eig_k^{2j} |φ_k|²)`, summed over both components.
pub fn sobolev_norm(state: &FieldState, basis: &SpectralBasis, j: u32) -> Result<f64> {
    if j > 4 {
        return Err(Error::InvalidArgument(format!("sobolev order must be <= 4, got {j}")));
    }
    let weighted = |v: &[Complex64]| -> f64 {
        v.iter()
            .zip(basis.eig_a())
            .map(|(c, e)| e.powi(2 * j as i32) * c.norm_sqr())
            .sum()
    };
    let total = weighted(&state.primary) + state.secondary.as_deref().map_or(0.0, weighted);
    Ok(total.sqrt())
}
