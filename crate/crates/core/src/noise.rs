//! Increments of the driving Lévy process `M = W + compensated jumps`.
//!
//! Both parts live in the field's spectral basis: mode `i` of the Q-Wiener part is
//! `sqrt(λ_i) β_i`, and mode `i` of the jump part is a real compensated compound
//! Poisson process with intensity `μ_i`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};

/// Independent random-number families. Streams from different families never
/// overlap, whatever the seed and index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum StreamFamily {
    Signal = 1,
    Observation = 2,
    Particles = 3,
    Prior = 4,
    Resample = 5,
    Replica = 6,
}

/// Counter-based stream address: `(seed, family, index)` selects a ChaCha stream and
/// each step owns a disjoint window of it, so draws depend only on
/// `(seed, family, index, step)` and never on evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub family: StreamFamily,
    pub index: u64,
}

const INDEX_BITS: u32 = 48;
const WORDS_PER_STEP_LOG2: u32 = 32;

impl StreamKey {
    pub fn new(seed: u64, family: StreamFamily) -> Self {
        Self { seed, family, index: 0 }
    }

    pub fn with_index(self, index: u64) -> Self {
        assert!(index < 1 << INDEX_BITS, "stream index {index} out of range");
        Self { index, ..self }
    }

    /// A fresh generator positioned at the start of `step`'s window.
    pub fn rng_at(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((self.family as u64) << INDEX_BITS) | self.index);
        rng.set_word_pos((step as u128) << WORDS_PER_STEP_LOG2);
        rng
    }
}

/// Eigenvalues `λ_i` of the trace-class covariance `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerSpec {
    pub lambdas: Vec<f64>,
}

impl WienerSpec {
    pub fn zero(modes: usize) -> Self {
        Self { lambdas: vec![0.0; modes] }
    }

    pub fn trace(&self) -> f64 {
        self.lambdas.iter().sum()
    }

    pub fn validate(&self, modes: usize) -> Result<()> {
        if self.lambdas.len() != modes {
            return Err(Error::DimensionMismatch(format!(
                "wiener spec has {} eigenvalues, basis has {modes} modes",
                self.lambdas.len()
            )));
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidSpec("wiener eigenvalues must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Per-mode law of the jump sizes.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpLaw {
    /// Every jump of mode `i` has size `a_i`.
    Fixed(Vec<f64>),
    /// Jump sizes of mode `i` are `N(mean_i, std_i²)`.
    Normal { mean: Vec<f64>, std: Vec<f64> },
}

impl JumpLaw {
    fn len(&self) -> usize {
        match self {
            JumpLaw::Fixed(a) => a.len(),
            JumpLaw::Normal { mean, .. } => mean.len(),
        }
    }

    pub fn mean(&self, mode: usize) -> f64 {
        match self {
            JumpLaw::Fixed(a) => a[mode],
            JumpLaw::Normal { mean, .. } => mean[mode],
        }
    }

    pub fn second_moment(&self, mode: usize) -> f64 {
        match self {
            JumpLaw::Fixed(a) => a[mode] * a[mode],
            JumpLaw::Normal { mean, std } => mean[mode] * mean[mode] + std[mode] * std[mode],
        }
    }

    fn sample<R: Rng + ?Sized>(&self, mode: usize, rng: &mut R) -> f64 {
        match self {
            JumpLaw::Fixed(a) => a[mode],
            JumpLaw::Normal { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean[mode] + std[mode] * z
            }
        }
    }
}

/// Compensated compound Poisson part of the noise.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpSpec {
    /// Poisson intensities `μ_i`.
    pub rates: Vec<f64>,
    pub law: JumpLaw,
}

impl JumpSpec {
    pub fn none(modes: usize) -> Self {
        Self { rates: vec![0.0; modes], law: JumpLaw::Fixed(vec![0.0; modes]) }
    }

    pub fn fixed(rates: Vec<f64>, amplitudes: Vec<f64>) -> Self {
        Self { rates, law: JumpLaw::Fixed(amplitudes) }
    }

    /// Covariance rate `Λ` of the compensated process: `diag(μ_i E[a_i²])`.
    pub fn lambda_matrix(&self) -> DMatrix<f64> {
        let diag: Vec<f64> = (0..self.rates.len())
            .map(|i| self.rates[i] * self.law.second_moment(i))
            .collect();
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))
    }

    pub fn validate(&self, modes: usize) -> Result<()> {
        if self.rates.len() != modes || self.law.len() != modes {
            return Err(Error::DimensionMismatch(format!(
                "jump spec must have {modes} rates and amplitudes"
            )));
        }
        if self.rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidSpec("jump rates must be finite and >= 0".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match &self.law {
            JumpLaw::Fixed(a) if !finite(a) => {
                Err(Error::InvalidSpec("jump amplitudes must be finite".into()))
            }
            JumpLaw::Normal { mean, std }
                if std.len() != modes || !finite(mean) || std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) =>
            {
                Err(Error::InvalidSpec("normal jump law needs finite means and stds >= 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// How the noise enters the signal equation.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseCoupling {
    /// `φ dM`: grid-pointwise product with the field (the random potential).
    Multiplicative,
    /// `B dM` with `B` diagonal in the spectral basis.
    Additive { scale: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub wiener: WienerSpec,
    pub jump: JumpSpec,
    pub coupling: NoiseCoupling,
}

impl NoiseSpec {
    pub fn silent(modes: usize) -> Self {
        Self {
            wiener: WienerSpec::zero(modes),
            jump: JumpSpec::none(modes),
            coupling: NoiseCoupling::Multiplicative,
        }
    }

    pub fn validate(&self, modes: usize) -> Result<()> {
        self.wiener.validate(modes)?;
        self.jump.validate(modes)?;
        if let NoiseCoupling::Additive { scale } = &self.coupling {
            if scale.len() != modes || scale.iter().any(|s| !s.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "additive noise scale must have {modes} finite entries"
                )));
            }
        }
        Ok(())
    }
}

/// One step's sample of `ΔM`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub dw: Vec<Complex64>,
    /// Real-valued; stored complex for uniform arithmetic with `dw`.
    pub dj: Vec<Complex64>,
    pub dt: f64,
}

impl NoiseIncrement {
    pub fn zero(modes: usize, dt: f64) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); modes];
        Self { dw: z.clone(), dj: z, dt }
    }

    pub fn total(&self) -> Vec<Complex64> {
        self.dw.iter().zip(&self.dj).map(|(a, b)| a + b).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.dw.iter().chain(&self.dj).all(|c| c.re == 0.0 && c.im == 0.0)
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")))
    }
}

/// Q-Wiener increment: mode `i` is complex Gaussian with `E|ΔW_i|² = λ_i dt`.
pub fn sample_wiener_increment<R: Rng + ?Sized>(
    spec: &WienerSpec,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    check_dt(dt)?;
    Ok(spec
        .lambdas
        .iter()
        .map(|&lam| {
            let sd = (0.5 * lam * dt).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(sd * re, sd * im)
        })
        .collect())
}

/// Compensated compound Poisson increment `Σ_{n ≤ N_i} a_{i,n} − μ_i E[a_i] dt`,
/// `N_i ~ Poisson(μ_i dt)`.
pub fn sample_jump_increment<R: Rng + ?Sized>(
    spec: &JumpSpec,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    check_dt(dt)?;
    let mut out = Vec::with_capacity(spec.rates.len());
    for (i, &mu) in spec.rates.iter().enumerate() {
        if mu == 0.0 {
            out.push(Complex64::new(0.0, 0.0));
            continue;
        }
        let poisson = Poisson::new(mu * dt)
            .map_err(|e| Error::InvalidArgument(format!("poisson rate {}: {e}", mu * dt)))?;
        let count = poisson.sample(rng) as u64;
        let jumps: f64 = (0..count).map(|_| spec.law.sample(i, rng)).sum();
        out.push(Complex64::new(jumps - mu * spec.law.mean(i) * dt, 0.0));
    }
    Ok(out)
}

/// Sum of independent Wiener and jump increments drawn in that order from `rng`.
pub fn sample_levy_increment<R: Rng + ?Sized>(
    wiener: &WienerSpec,
    jump: &JumpSpec,
    dt: f64,
    rng: &mut R,
) -> Result<NoiseIncrement> {
    let dw = sample_wiener_increment(wiener, dt, rng)?;
    let dj = sample_jump_increment(jump, dt, rng)?;
    Ok(NoiseIncrement { dw, dj, dt })
}
