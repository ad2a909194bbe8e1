//! Experiment configuration: TOML with dotted keys, checked into core types.
//!
//! Every validation failure names the offending key, e.g.
//! `observation.functionals: at least one functional is required`.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Deserialize;
use wavefilter::filters::GaussianPrior;
use wavefilter::{
    build_basis, Component, Functional, JumpLaw, JumpSpec, ModelKind, ModelSpec, NoiseCoupling, NoiseSpec,
    ObservationMode, ObservationOperator, Part, PathConfig, SignalModel, SpectralBasis, WienerSpec,
};

use crate::HarnessError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl ScalarOrList {
    fn expand(&self, len: usize, key: &str) -> Result<Vec<f64>, HarnessError> {
        match self {
            ScalarOrList::Scalar(v) => Ok(vec![*v; len]),
            ScalarOrList::List(v) if v.len() == len => Ok(v.clone()),
            ScalarOrList::List(v) => Err(cfg_err(key, format!("expected {len} values, got {}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub model: RawModel,
    #[serde(default)]
    pub noise: RawNoise,
    pub observation: Option<RawObservation>,
    pub path: RawPath,
    #[serde(default)]
    pub prior: RawPrior,
    pub filter: Option<RawFilter>,
    pub riccati: Option<RawRiccati>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub kind: String,
    #[serde(default = "one")]
    pub dimension: usize,
    pub modes: usize,
    pub domain_length: Option<f64>,
    pub power: Option<u32>,
    pub sign: Option<f64>,
    pub k0: Option<f64>,
    pub g: Option<f64>,
    #[serde(default)]
    pub linear: bool,
    #[serde(default)]
    pub dealias: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNoise {
    pub coupling: Option<String>,
    pub scale: Option<ScalarOrList>,
    pub wiener: Option<RawWiener>,
    pub jump: Option<RawJump>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWiener {
    pub lambda: ScalarOrList,
    /// `λ_k ← λ_k (1 + |k|²)^{-decay}`.
    #[serde(default)]
    pub decay: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawJump {
    pub rates: ScalarOrList,
    #[serde(default = "fixed_law")]
    pub law: String,
    pub amplitude: Option<ScalarOrList>,
    pub mean: Option<ScalarOrList>,
    pub std: Option<ScalarOrList>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawObservation {
    #[serde(default)]
    pub functionals: Vec<RawFunctional>,
    pub noise_std: Option<f64>,
    pub noise_cov: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFunctional {
    pub kind: String,
    pub component: Option<String>,
    pub index: Option<usize>,
    pub point: Option<usize>,
    pub part: Option<String>,
    pub weights_re: Option<Vec<f64>>,
    pub weights_im: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPath {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_guard")]
    pub guard_lambda: f64,
    #[serde(default = "one_u32")]
    pub guard_order: u32,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPrior {
    pub mean: Option<Vec<f64>>,
    pub variance: Option<f64>,
    /// Start the truth at the prior mean instead of a prior draw.
    #[serde(default)]
    pub truth_at_mean: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFilter {
    pub kind: String,
    pub particle: Option<RawParticle>,
    pub kalman: Option<RawKalman>,
    #[serde(default = "ten")]
    pub checkpoints: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParticle {
    #[serde(rename = "N")]
    pub count: usize,
    #[serde(default = "half")]
    pub ess_threshold: f64,
    #[serde(default = "ito")]
    pub mode: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawKalman {
    #[serde(default = "fixed_law")]
    pub linearization: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRiccati {
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default = "yes")]
    pub chandrasekhar: bool,
}

fn one() -> usize {
    1
}
fn one_u32() -> u32 {
    1
}
fn ten() -> usize {
    10
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn default_guard() -> f64 {
    1e6
}
fn fixed_law() -> String {
    "fixed".into()
}
fn ito() -> String {
    "ito".into()
}

fn cfg_err(key: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config { key: key.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linearization {
    /// About the noise-free path from the prior mean.
    Fixed,
    /// About the current filter mean.
    SelfConsistent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSettings {
    pub count: usize,
    pub ess_threshold: f64,
    pub mode: ObservationMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSettings {
    pub particle: Option<ParticleSettings>,
    pub kalman: Option<Linearization>,
    pub checkpoints: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSettings {
    pub t_end: f64,
    pub dt: f64,
    pub record_every: usize,
    pub chandrasekhar: bool,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub model: SignalModel,
    pub observation: Option<ObservationOperator>,
    pub path: PathConfig,
    pub prior: GaussianPrior,
    pub truth_at_mean: bool,
    pub filter: Option<FilterSettings>,
    pub riccati: RiccatiSettings,
    /// SHA-256 of the configuration text.
    pub config_hash: String,
}

impl ExperimentConfig {
    pub fn basis(&self) -> &SpectralBasis {
        &self.model.basis
    }

    /// Parses and validates; `seed_override` replaces `seed`.
    pub fn from_toml(text: &str, seed_override: Option<u64>) -> Result<Self, HarnessError> {
        use sha2::{Digest, Sha256};
        let de = toml::Deserializer::parse(text).map_err(|e| cfg_err("<document>", e.message().to_string()))?;
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let key = if key == "." { "<document>".to_string() } else { key };
            cfg_err(&key, e.inner().message().to_string())
        })?;
        let hash = hex::encode(Sha256::digest(text.as_bytes()));
        Self::from_raw(raw, seed_override, hash)
    }

    pub fn from_raw(raw: RawConfig, seed_override: Option<u64>, config_hash: String) -> Result<Self, HarnessError> {
        let seed = seed_override.or(raw.seed).ok_or_else(|| cfg_err("seed", "required (or pass --seed)"))?;
        let spec = model_spec(&raw.model)?;
        let basis = build_basis(&spec).map_err(|e| cfg_err("model", e.to_string()))?;
        let noise = noise_spec(&raw.noise, &basis)?;
        let model = SignalModel::new(basis.clone(), noise).map_err(|e| cfg_err("noise", e.to_string()))?;
        let observation = raw.observation.as_ref().map(|o| observation_op(o, &basis)).transpose()?;

        let path = PathConfig {
            dt: raw.path.dt,
            t_end: raw.path.t_end,
            guard_lambda: raw.path.guard_lambda,
            guard_order: raw.path.guard_order,
            seed,
        };
        path.validate().map_err(|e| cfg_err("path", e.to_string()))?;

        let nr = basis.real_dim();
        let mean = match &raw.prior.mean {
            None => DVector::zeros(nr),
            Some(v) if v.len() == nr => DVector::from_vec(v.clone()),
            Some(v) => return Err(cfg_err("prior.mean", format!("expected {nr} real coordinates, got {}", v.len()))),
        };
        let variance = raw.prior.variance.unwrap_or(0.0);
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(cfg_err("prior.variance", "must be finite and >= 0"));
        }
        let prior = GaussianPrior::isotropic(mean, variance);

        let filter = raw.filter.as_ref().map(|f| filter_settings(f, observation.as_ref())).transpose()?;
        let riccati = match &raw.riccati {
            None => RiccatiSettings { t_end: path.t_end, dt: path.dt, record_every: 1, chandrasekhar: true },
            Some(r) => {
                let s = RiccatiSettings {
                    t_end: r.t_end.unwrap_or(path.t_end),
                    dt: r.dt.unwrap_or(path.dt),
                    record_every: r.record_every,
                    chandrasekhar: r.chandrasekhar,
                };
                if !(s.dt > 0.0 && s.t_end > 0.0) {
                    return Err(cfg_err("riccati", "dt and t_end must be > 0"));
                }
                if s.record_every == 0 {
                    return Err(cfg_err("riccati.record_every", "must be >= 1"));
                }
                s
            }
        };
        Ok(Self {
            seed,
            output: raw.output,
            model,
            observation,
            path,
            prior,
            truth_at_mean: raw.prior.truth_at_mean,
            filter,
            riccati,
            config_hash,
        })
    }

    pub fn require_observation(&self) -> Result<&ObservationOperator, HarnessError> {
        self.observation.as_ref().ok_or_else(|| cfg_err("observation", "section is required for this command"))
    }

    pub fn require_filter(&self) -> Result<&FilterSettings, HarnessError> {
        self.filter.as_ref().ok_or_else(|| cfg_err("filter", "section is required for this command"))
    }
}

fn model_spec(m: &RawModel) -> Result<ModelSpec, HarnessError> {
    let mut spec = match m.kind.as_str() {
        "paraxial" | "nls" => ModelSpec::paraxial(m.dimension, m.modes),
        "klein_gordon" => ModelSpec::klein_gordon(m.dimension, m.modes, m.k0.unwrap_or(1.0)),
        "sine_gordon" => ModelSpec::sine_gordon(m.dimension, m.modes, m.k0.unwrap_or(1.0), m.g.unwrap_or(1.0)),
        other => {
            return Err(cfg_err(
                "model.kind",
                format!("unknown model `{other}` (expected paraxial, klein_gordon or sine_gordon)"),
            ))
        }
    };
    if let Some(l) = m.domain_length {
        spec.domain_length = l;
    }
    if let Some(p) = m.power {
        if spec.kind == ModelKind::SineGordon {
            return Err(cfg_err("model.power", "not used by sine_gordon"));
        }
        spec.power = p;
    }
    if let Some(s) = m.sign {
        spec.sign = s;
    }
    if m.g.is_some() && spec.kind != ModelKind::SineGordon {
        return Err(cfg_err("model.g", "only sine_gordon has a coupling g"));
    }
    if m.k0.is_some() && spec.kind == ModelKind::ParaxialNls {
        return Err(cfg_err("model.k0", "the paraxial model has no mass term"));
    }
    spec.linear = m.linear;
    spec.dealias = m.dealias;
    spec.validate().map_err(|e| cfg_err("model", e.to_string()))?;
    Ok(spec)
}

fn noise_spec(n: &RawNoise, basis: &SpectralBasis) -> Result<NoiseSpec, HarnessError> {
    let m = basis.num_modes();
    let mut spec = NoiseSpec::silent(m);
    if let Some(w) = &n.wiener {
        let mut lambdas = w.lambda.expand(m, "noise.wiener.lambda")?;
        for (lam, k) in lambdas.iter_mut().zip(basis.wavevectors()) {
            let k2: i64 = k.iter().map(|v| v * v).sum();
            *lam *= (1.0 + k2 as f64).powf(-w.decay);
        }
        spec.wiener = WienerSpec { lambdas };
        spec.wiener.validate(m).map_err(|e| cfg_err("noise.wiener.lambda", e.to_string()))?;
    }
    if let Some(j) = &n.jump {
        let rates = j.rates.expand(m, "noise.jump.rates")?;
        let law = match j.law.as_str() {
            "fixed" => JumpLaw::Fixed(
                j.amplitude
                    .as_ref()
                    .ok_or_else(|| cfg_err("noise.jump.amplitude", "required for law = \"fixed\""))?
                    .expand(m, "noise.jump.amplitude")?,
            ),
            "normal" => JumpLaw::Normal {
                mean: j
                    .mean
                    .as_ref()
                    .ok_or_else(|| cfg_err("noise.jump.mean", "required for law = \"normal\""))?
                    .expand(m, "noise.jump.mean")?,
                std: j
                    .std
                    .as_ref()
                    .ok_or_else(|| cfg_err("noise.jump.std", "required for law = \"normal\""))?
                    .expand(m, "noise.jump.std")?,
            },
            other => return Err(cfg_err("noise.jump.law", format!("unknown law `{other}` (fixed or normal)"))),
        };
        spec.jump = JumpSpec { rates, law };
        spec.jump.validate(m).map_err(|e| cfg_err("noise.jump", e.to_string()))?;
    }
    spec.coupling = match n.coupling.as_deref().unwrap_or("multiplicative") {
        "multiplicative" => {
            if n.scale.is_some() {
                return Err(cfg_err("noise.scale", "only used with coupling = \"additive\""));
            }
            NoiseCoupling::Multiplicative
        }
        "additive" => NoiseCoupling::Additive {
            scale: n.scale.clone().unwrap_or(ScalarOrList::Scalar(1.0)).expand(m, "noise.scale")?,
        },
        other => {
            return Err(cfg_err("noise.coupling", format!("unknown coupling `{other}` (multiplicative or additive)")))
        }
    };
    spec.validate(m).map_err(|e| cfg_err("noise", e.to_string()))?;
    Ok(spec)
}

fn observation_op(o: &RawObservation, basis: &SpectralBasis) -> Result<ObservationOperator, HarnessError> {
    if o.functionals.is_empty() {
        return Err(cfg_err("observation.functionals", "at least one functional is required"));
    }
    let m = basis.num_modes();
    let mut list = Vec::with_capacity(o.functionals.len());
    for (i, f) in o.functionals.iter().enumerate() {
        let key = |field: &str| format!("observation.functionals[{i}].{field}");
        let component = match f.component.as_deref().unwrap_or("primary") {
            "primary" => Component::Primary,
            "secondary" => Component::Secondary,
            other => return Err(cfg_err(&key("component"), format!("unknown component `{other}`"))),
        };
        let part = match f.part.as_deref().unwrap_or("re") {
            "re" => Part::Re,
            "im" => Part::Im,
            other => return Err(cfg_err(&key("part"), format!("unknown part `{other}` (re or im)"))),
        };
        let need = |v: Option<usize>, field: &str| v.ok_or_else(|| cfg_err(&key(field), "required for this kind"));
        let functional = match f.kind.as_str() {
            "mode" => Functional::Mode { component, index: need(f.index, "index")?, part },
            "grid_point" => Functional::GridPoint { component, point: need(f.point, "point")?, part },
            "grid_intensity" => Functional::GridIntensity { component, point: need(f.point, "point")? },
            "window" => {
                let re = f.weights_re.clone().unwrap_or_else(|| vec![0.0; m]);
                let im = f.weights_im.clone().unwrap_or_else(|| vec![0.0; m]);
                if re.len() != m || im.len() != m {
                    return Err(cfg_err(&key("weights_re"), format!("window weights need {m} entries")));
                }
                Functional::Window {
                    component,
                    weights: re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect(),
                }
            }
            other => {
                return Err(cfg_err(
                    &key("kind"),
                    format!("unknown functional `{other}` (mode, grid_point, grid_intensity or window)"),
                ))
            }
        };
        list.push(functional);
    }
    let op = ObservationOperator::new(list, basis).map_err(|e| cfg_err("observation.functionals", e.to_string()))?;
    let n = op.obs_dim();
    let cov = match (&o.noise_std, &o.noise_cov) {
        (Some(_), Some(_)) => return Err(cfg_err("observation.noise_cov", "give noise_std or noise_cov, not both")),
        (Some(s), None) => {
            if !(*s > 0.0) {
                return Err(cfg_err("observation.noise_std", "must be > 0"));
            }
            DMatrix::identity(n, n) * (s * s)
        }
        (None, Some(rows)) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(cfg_err("observation.noise_cov", format!("must be {n} x {n}")));
            }
            DMatrix::from_fn(n, n, |i, j| rows[i][j])
        }
        (None, None) => return Ok(op),
    };
    op.with_noise_cov(cov).map_err(|e| cfg_err("observation.noise_cov", e.to_string()))
}

fn filter_settings(f: &RawFilter, op: Option<&ObservationOperator>) -> Result<FilterSettings, HarnessError> {
    let op = op.ok_or_else(|| cfg_err("observation", "section is required when a filter is configured"))?;
    let (want_pf, want_kf) = match f.kind.as_str() {
        "particle" => (true, false),
        "kalman" => (false, true),
        "both" => (true, true),
        other => return Err(cfg_err("filter.kind", format!("unknown filter `{other}` (particle, kalman or both)"))),
    };
    let particle = if want_pf {
        let p = f.particle.as_ref().ok_or_else(|| cfg_err("filter.particle.N", "required for particle filters"))?;
        if p.count == 0 {
            return Err(cfg_err("filter.particle.N", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&p.ess_threshold) {
            return Err(cfg_err("filter.particle.ess_threshold", "must lie in [0, 1]"));
        }
        let mode = match p.mode.as_str() {
            "ito" => ObservationMode::Ito,
            "whitenoise" => ObservationMode::WhiteNoise,
            other => return Err(cfg_err("filter.particle.mode", format!("unknown mode `{other}` (ito or whitenoise)"))),
        };
        Some(ParticleSettings { count: p.count, ess_threshold: p.ess_threshold, mode })
    } else {
        None
    };
    let kalman = if want_kf {
        if !op.is_linear() {
            return Err(cfg_err("observation.functionals", "the Kalman filter needs linear functionals"));
        }
        let lin = f.kalman.as_ref().map_or("fixed", |k| k.linearization.as_str());
        Some(match lin {
            "fixed" => Linearization::Fixed,
            "self" => Linearization::SelfConsistent,
            other => {
                return Err(cfg_err("filter.kalman.linearization", format!("unknown value `{other}` (fixed or self)")))
            }
        })
    } else {
        None
    };
    if f.checkpoints == 0 {
        return Err(cfg_err("filter.checkpoints", "must be >= 1"));
    }
    Ok(FilterSettings { particle, kalman, checkpoints: f.checkpoints })
}
