//! The four experiment commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use wavefilter::filters::{
    chandrasekhar_integrate, innovation_path, kalman_step_about, pf_moment, pf_step, quadratic_variation,
    riccati_path, ChandrasekharState, KalmanState, ParticleCloud, RiccatiState,
};
use wavefilter::{
    eval_jacobian, free_generator, observe_ito, observe_whitenoise, simulate_path, step_mild, FieldState,
    LinearObservation, LinearizedOperator, NoiseIncrement, ObservationMode, ObservationOperator, ObservationRecord,
    SpectralBasis, StreamFamily, StreamKey, Trajectory,
};

use crate::config::{ExperimentConfig, Linearization, ParticleSettings};
use crate::output::{num, Meta, OutputDir, Table};
use crate::HarnessError;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the configured output directory.
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The truth path tripped the blow-up guard; outputs stop at `stopped_at`.
    GuardStopped,
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterSummary {
    pub final_mean: Vec<f64>,
    pub final_cov_trace: f64,
    pub rmse_final: f64,
    pub rmse_mean: f64,
    pub log_evidence: f64,
    pub ess_min: Option<f64>,
    pub ess_mean: Option<f64>,
    pub innovation_qv_over_t: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub time: f64,
    pub coordinate: String,
    pub pf_mean: f64,
    pub kf_mean: f64,
    pub gap: f64,
    pub kf_std: f64,
    pub tolerance: f64,
}

impl CompareRow {
    pub fn within(&self) -> bool {
        self.gap.abs() <= self.tolerance
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub all_within: bool,
    pub max_gap_over_tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiccatiReport {
    pub dim: usize,
    pub final_trace: f64,
    /// `max|P_chandrasekhar − P_riccati| / max|P_riccati|` at the final time.
    pub chandrasekhar_relative_gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub status: RunStatus,
    pub stopped_at: Option<f64>,
    pub steps: usize,
    pub particle: Option<FilterSummary>,
    pub kalman: Option<FilterSummary>,
    pub compare: Option<CompareReport>,
    pub riccati: Option<RiccatiReport>,
    /// `(time, trace P)` at the filter checkpoints.
    pub riccati_trace: Vec<(f64, f64)>,
    pub output_dir: PathBuf,
    pub wall_clock_seconds: f64,
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    out: OutputDir,
    quiet: bool,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a ExperimentConfig, opts: &RunOptions, command: &str) -> Result<Self, HarnessError> {
        let root = opts
            .out
            .clone()
            .or_else(|| cfg.output.clone())
            .ok_or_else(|| HarnessError::Config { key: "output".into(), message: "set `output` or pass --out".into() })?;
        let meta = Meta {
            config_sha256: cfg.config_hash.clone(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
        };
        Ok(Self { cfg, out: OutputDir::create(&root, meta)?, quiet: opts.quiet })
    }

    fn log(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn coefficient_labels(basis: &SpectralBasis) -> Vec<String> {
    let m = basis.num_modes();
    let mut out = Vec::new();
    for i in 0..m {
        out.push(format!("mode{i}_re"));
        out.push(format!("mode{i}_im"));
    }
    if basis.spec().is_second_order() {
        for i in 0..m {
            out.push(format!("vel{i}_re"));
            out.push(format!("vel{i}_im"));
        }
    }
    out
}

/// Raw coefficients `(ψ, v)` as reals, the layout of trajectory.csv.
fn coefficients(state: &FieldState) -> Vec<f64> {
    let mut out = Vec::new();
    for c in state.primary.iter().chain(state.secondary.iter().flatten()) {
        out.push(c.re);
        out.push(c.im);
    }
    out
}

/// Names of the real-ified coordinates used by the filters.
fn real_labels(basis: &SpectralBasis) -> Vec<String> {
    let mut labels = coefficient_labels(basis);
    if basis.spec().is_second_order() {
        for l in labels.iter_mut().take(2 * basis.num_modes()) {
            *l = format!("omega_{l}");
        }
    }
    labels
}

fn real_to_coefficients(basis: &SpectralBasis, x: &DVector<f64>) -> Result<Vec<f64>, HarnessError> {
    Ok(coefficients(&basis.from_real(x.as_slice(), 0.0)?))
}

fn initial_truth(cfg: &ExperimentConfig) -> Result<FieldState, HarnessError> {
    let basis = cfg.basis();
    if cfg.truth_at_mean {
        return Ok(basis.from_real(cfg.prior.mean.as_slice(), 0.0)?);
    }
    let key = StreamKey::new(cfg.seed, StreamFamily::Signal);
    Ok(ParticleCloud::from_prior(&cfg.prior, 1, basis, 0.0, key)?.particles.remove(0))
}

fn observation_mode(cfg: &ExperimentConfig) -> ObservationMode {
    cfg.filter.as_ref().and_then(|f| f.particle.as_ref()).map_or(ObservationMode::Ito, |p| p.mode)
}

fn simulate(cfg: &ExperimentConfig, op: Option<&ObservationOperator>) -> Result<(Trajectory, Option<ObservationRecord>), HarnessError> {
    let x0 = initial_truth(cfg)?;
    let traj = simulate_path(&x0, &cfg.path, &cfg.model, StreamKey::new(cfg.seed, StreamFamily::Signal))?;
    let record = match op {
        None => None,
        Some(op) => {
            let key = StreamKey::new(cfg.seed, StreamFamily::Observation);
            Some(match observation_mode(cfg) {
                ObservationMode::Ito => observe_ito(&traj, op, key)?,
                ObservationMode::WhiteNoise => observe_whitenoise(&traj, op, key)?,
            })
        }
    };
    Ok((traj, record))
}

fn write_truth(ctx: &mut Context, traj: &Trajectory, record: Option<&ObservationRecord>) -> Result<(), HarnessError> {
    let basis = ctx.cfg.basis();
    let mut modes = Table::new(
        std::iter::once("index".to_string())
            .chain((0..basis.spec().dimension).map(|d| format!("k{}", d + 1)))
            .chain(std::iter::once("eig_a".to_string()))
            .collect(),
    );
    for (i, (k, e)) in basis.wavevectors().iter().zip(basis.eig_a()).enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(k.iter().map(|v| v.to_string()));
        row.push(num(*e));
        modes.push(row);
    }
    ctx.out.write_table("modes.csv", &modes)?;

    let mut t = Table::new(std::iter::once("time".to_string()).chain(coefficient_labels(basis)).collect());
    for s in &traj.states {
        t.push_numbers(std::iter::once(s.time).chain(coefficients(s)));
    }
    ctx.out.write_table("trajectory.csv", &t)?;
    if let Some(rec) = record {
        let width = rec.values.first().map_or(0, Vec::len);
        let mut o = Table::new(std::iter::once("time".to_string()).chain((1..=width).map(|j| format!("y_{j}"))).collect());
        for (time, v) in rec.times.iter().zip(&rec.values) {
            o.push_numbers(std::iter::once(*time).chain(v.iter().copied()));
        }
        ctx.out.write_table("observations.csv", &o)?;
    }
    Ok(())
}

fn status_of(traj: &Trajectory) -> RunStatus {
    if traj.stopped_at.is_some() {
        RunStatus::GuardStopped
    } else {
        RunStatus::Completed
    }
}

/// One filter's output at the initial time and after every observation.
struct FilterPath {
    times: Vec<f64>,
    means: Vec<DVector<f64>>,
    cov_traces: Vec<f64>,
    ess: Vec<f64>,
    log_evidence: Vec<f64>,
    /// Estimate of `h(X)` at the left end of each observation interval.
    predicted_h: Vec<Vec<f64>>,
    /// Diagonal of the covariance (Kalman only).
    variances: Vec<DVector<f64>>,
}

impl FilterPath {
    fn new() -> Self {
        Self {
            times: vec![],
            means: vec![],
            cov_traces: vec![],
            ess: vec![],
            log_evidence: vec![],
            predicted_h: vec![],
            variances: vec![],
        }
    }
}

fn run_particle(
    cfg: &ExperimentConfig,
    op: &ObservationOperator,
    record: &ObservationRecord,
    settings: &ParticleSettings,
) -> Result<FilterPath, HarnessError> {
    let basis = cfg.basis();
    let mut cloud =
        ParticleCloud::from_prior(&cfg.prior, settings.count, basis, 0.0, StreamKey::new(cfg.seed, StreamFamily::Prior))?;
    let mut path = FilterPath::new();
    let push = |path: &mut FilterPath, cloud: &ParticleCloud, time: f64, ess: f64| {
        let mean = cloud.mean(basis);
        let w = cloud.weights();
        let second: f64 = cloud
            .particles
            .iter()
            .zip(&w)
            .filter(|(_, w)| **w > 0.0)
            .map(|(p, w)| w * basis.to_real(p).iter().map(|v| v * v).sum::<f64>())
            .sum();
        path.times.push(time);
        path.cov_traces.push((second - mean.norm_squared()).max(0.0));
        path.means.push(mean);
        path.ess.push(ess);
        path.log_evidence.push(cloud.log_evidence);
    };
    push(&mut path, &cloud, 0.0, cloud.ess);
    for (time, y) in record.times.iter().zip(&record.values) {
        let h_now: Vec<f64> = (0..op.obs_dim()).map(|j| pf_moment(&cloud, |s| op.evaluate(s)[j])).collect();
        path.predicted_h.push(h_now);
        let (next, ess) =
            pf_step(&cloud, y, settings.mode, &cfg.path, &cfg.model, op, settings.ess_threshold, cfg.seed)?;
        cloud = next;
        push(&mut path, &cloud, *time, ess);
    }
    Ok(path)
}

fn zero_step(state: &FieldState, cfg: &ExperimentConfig) -> Result<FieldState, HarnessError> {
    let inc = NoiseIncrement::zero(cfg.basis().num_modes(), cfg.path.dt);
    let mut next = step_mild(state, cfg.path.dt, &inc, &cfg.model)?;
    next.time = state.time + cfg.path.dt;
    Ok(next)
}

fn run_kalman(
    cfg: &ExperimentConfig,
    lin: &LinearObservation,
    record: &ObservationRecord,
    linearization: Linearization,
) -> Result<FilterPath, HarnessError> {
    let basis = cfg.basis();
    let dt = cfg.path.dt;
    let linear_model = basis.spec().linear;
    let x0 = basis.from_real(cfg.prior.mean.as_slice(), 0.0)?;
    let free = free_generator(basis);
    let cov = RiccatiState::new(cfg.prior.cov.clone(), cfg.model.forcing_matrix(&x0))?;
    let mut k = KalmanState::new(cfg.prior.mean.clone(), cov, 0.0)?;
    let mut reference = x0;
    let mut path = FilterPath::new();
    let push = |path: &mut FilterPath, k: &KalmanState, time: f64| {
        path.times.push(time);
        path.means.push(k.mean.clone());
        path.cov_traces.push(k.cov.p.trace());
        path.variances.push(k.cov.p.diagonal());
        path.ess.push(f64::NAN);
        path.log_evidence.push(k.log_evidence);
    };
    push(&mut path, &k, 0.0);
    let increments = record.increments();
    for (time, dy) in record.times.iter().zip(&increments) {
        path.predicted_h.push((&lin.h * &k.mean).iter().copied().collect());
        if linearization == Linearization::SelfConsistent {
            reference = basis.from_real(k.mean.as_slice(), k.time)?;
        }
        let amat = if linear_model { free.clone() } else { eval_jacobian(&reference, basis) };
        k.cov.f = cfg.model.forcing_matrix(&reference);
        let next_ref = zero_step(&reference, cfg)?;
        k = if linear_model {
            kalman_step_about(&k, None, dy, dt, &amat, lin)?
        } else {
            let r_now = DVector::from_vec(basis.to_real(&reference));
            let r_next = DVector::from_vec(basis.to_real(&next_ref));
            kalman_step_about(&k, Some((&r_now, &r_next)), dy, dt, &amat, lin)?
        };
        reference = next_ref;
        push(&mut path, &k, *time);
    }
    Ok(path)
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64).sqrt()
}

fn write_filter(
    ctx: &mut Context,
    name: &str,
    path: &FilterPath,
    traj: &Trajectory,
    record: &ObservationRecord,
) -> Result<FilterSummary, HarnessError> {
    let basis = ctx.cfg.basis();
    let header = std::iter::once("time".to_string())
        .chain(coefficient_labels(basis).into_iter().map(|l| format!("mean_{l}")))
        .chain(["cov_trace", "ess", "log_evidence"].map(String::from))
        .collect();
    let mut t = Table::new(header);
    let mut errors = Vec::with_capacity(path.means.len());
    let mut final_mean = Vec::new();
    for (n, mean) in path.means.iter().enumerate() {
        let coeffs = real_to_coefficients(basis, mean)?;
        errors.push(rmse(&coeffs, &coefficients(&traj.states[n])));
        t.push_numbers(
            std::iter::once(path.times[n])
                .chain(coeffs.iter().copied())
                .chain([path.cov_traces[n], path.ess[n], path.log_evidence[n]]),
        );
        final_mean = coeffs;
    }
    ctx.out.write_table(&format!("filter{name}.csv"), &t)?;

    let nu = innovation_path(record, &path.predicted_h)?;
    let width = nu.first().map_or(0, Vec::len);
    let mut it = Table::new(std::iter::once("time".to_string()).chain((1..=width).map(|j| format!("nu_{j}"))).collect());
    for (time, v) in record.times.iter().zip(&nu) {
        it.push_numbers(std::iter::once(*time).chain(v.iter().copied()));
    }
    ctx.out.write_table(&format!("innovation{name}.csv"), &it)?;
    let horizon = record.times.last().map_or(0.0, |t| t - traj.times[0]);
    let qv = quadratic_variation(&nu).iter().map(|q| q / horizon).collect();

    let finite_ess: Vec<f64> = path.ess.iter().copied().filter(|e| e.is_finite()).collect();
    Ok(FilterSummary {
        final_mean,
        final_cov_trace: *path.cov_traces.last().unwrap_or(&0.0),
        rmse_final: *errors.last().unwrap_or(&0.0),
        rmse_mean: errors.iter().sum::<f64>() / errors.len().max(1) as f64,
        log_evidence: *path.log_evidence.last().unwrap_or(&0.0),
        ess_min: finite_ess.iter().copied().reduce(f64::min),
        ess_mean: (!finite_ess.is_empty()).then(|| finite_ess.iter().sum::<f64>() / finite_ess.len() as f64),
        innovation_qv_over_t: qv,
    })
}

fn checkpoint_indices(steps: usize, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (1..=count).map(|c| ((c * steps) as f64 / count as f64).round() as usize).collect();
    idx.dedup();
    idx.retain(|&i| i > 0);
    idx
}

fn compare(pf: &FilterPath, kf: &FilterPath, labels: &[String], particles: usize, checkpoints: usize) -> CompareReport {
    let steps = pf.means.len() - 1;
    let mut rows = Vec::new();
    for n in checkpoint_indices(steps, checkpoints) {
        for (i, label) in labels.iter().enumerate() {
            let kf_std = kf.variances[n][i].max(0.0).sqrt();
            rows.push(CompareRow {
                time: pf.times[n],
                coordinate: label.clone(),
                pf_mean: pf.means[n][i],
                kf_mean: kf.means[n][i],
                gap: pf.means[n][i] - kf.means[n][i],
                kf_std,
                tolerance: 5.0 * kf_std / (particles as f64).sqrt(),
            });
        }
    }
    let max_ratio = rows.iter().map(|r| r.gap.abs() / r.tolerance).fold(0.0, f64::max);
    CompareReport { all_within: rows.iter().all(CompareRow::within), max_gap_over_tolerance: max_ratio, rows }
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| HarnessError::Io(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn finish(ctx: &mut Context, mut summary: RunSummary, started: Instant) -> Result<RunSummary, HarnessError> {
    summary.wall_clock_seconds = started.elapsed().as_secs_f64();
    summary.output_dir = ctx.out.root().to_path_buf();
    ctx.out.write_json("summary.json", &summary)?;
    ctx.log(&format!("{}: {:?}, wrote {}", summary.command, summary.status, ctx.out.root().display()));
    Ok(summary)
}

fn empty_summary(command: &str, traj: Option<&Trajectory>) -> RunSummary {
    RunSummary {
        command: command.to_string(),
        status: traj.map_or(RunStatus::Completed, status_of),
        stopped_at: traj.and_then(|t| t.stopped_at),
        steps: traj.map_or(0, |t| t.states.len() - 1),
        particle: None,
        kalman: None,
        compare: None,
        riccati: None,
        riccati_trace: Vec::new(),
        output_dir: PathBuf::new(),
        wall_clock_seconds: 0.0,
    }
}

/// Truth path and observations.
pub fn run_simulate(cfg: &ExperimentConfig, opts: &RunOptions, threads: Option<usize>) -> Result<RunSummary, HarnessError> {
    let started = Instant::now();
    let mut ctx = Context::new(cfg, opts, "simulate")?;
    let (traj, record) = in_pool(threads, || simulate(cfg, cfg.observation.as_ref()))??;
    write_truth(&mut ctx, &traj, record.as_ref())?;
    finish(&mut ctx, empty_summary("simulate", Some(&traj)), started)
}

fn filter_common(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    threads: Option<usize>,
    command: &str,
) -> Result<RunSummary, HarnessError> {
    let started = Instant::now();
    let settings = cfg.require_filter()?;
    let op = cfg.require_observation()?;
    if command == "compare" && (settings.particle.is_none() || settings.kalman.is_none()) {
        return Err(HarnessError::Config { key: "filter.kind".into(), message: "compare needs filter.kind = \"both\"".into() });
    }
    let lin = match settings.kalman {
        Some(_) => Some(op.linear().map_err(|e| HarnessError::Config {
            key: "observation.functionals".into(),
            message: e.to_string(),
        })?),
        None => None,
    };
    let mut ctx = Context::new(cfg, opts, command)?;
    let (traj, record) = in_pool(threads, || simulate(cfg, Some(op)))??;
    let record = record.expect("observation operator present");
    write_truth(&mut ctx, &traj, Some(&record))?;
    ctx.log(&format!("{command}: truth has {} steps", traj.states.len() - 1));

    let pf = match &settings.particle {
        Some(p) => Some(in_pool(threads, || run_particle(cfg, op, &record, p))??),
        None => None,
    };
    let kf = match (&settings.kalman, &lin) {
        (Some(l), Some(lin)) => Some(run_kalman(cfg, lin, &record, *l)?),
        _ => None,
    };
    let both = pf.is_some() && kf.is_some();
    let mut summary = empty_summary(command, Some(&traj));
    if let Some(path) = &pf {
        let name = if both { "_particle" } else { "" };
        summary.particle = Some(write_filter(&mut ctx, name, path, &traj, &record)?);
    }
    if let Some(path) = &kf {
        let name = if both { "_kalman" } else { "" };
        summary.kalman = Some(write_filter(&mut ctx, name, path, &traj, &record)?);
        let steps = path.means.len() - 1;
        summary.riccati_trace =
            checkpoint_indices(steps, settings.checkpoints).into_iter().map(|n| (path.times[n], path.cov_traces[n])).collect();
    }
    if let (Some(pf), Some(kf), Some(p)) = (&pf, &kf, &settings.particle) {
        let labels = real_labels(cfg.basis());
        let report = compare(pf, kf, &labels, p.count, settings.checkpoints);
        let mut t = Table::new(
            ["time", "coordinate", "pf_mean", "kf_mean", "gap", "kf_std", "tolerance", "within"].map(String::from).to_vec(),
        );
        for r in &report.rows {
            t.push(vec![
                num(r.time),
                r.coordinate.clone(),
                num(r.pf_mean),
                num(r.kf_mean),
                num(r.gap),
                num(r.kf_std),
                num(r.tolerance),
                r.within().to_string(),
            ]);
        }
        ctx.out.write_table("compare.csv", &t)?;
        summary.compare = Some(report);
    }
    finish(&mut ctx, summary, started)
}

/// Truth, observations and the configured filter(s).
pub fn run_filter(cfg: &ExperimentConfig, opts: &RunOptions, threads: Option<usize>) -> Result<RunSummary, HarnessError> {
    filter_common(cfg, opts, threads, "filter")
}

/// Particle and Kalman filters on the same data plus the PF−KF gap table.
pub fn run_compare(cfg: &ExperimentConfig, opts: &RunOptions, threads: Option<usize>) -> Result<RunSummary, HarnessError> {
    filter_common(cfg, opts, threads, "compare")
}

fn matrix_header(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    (0..rows).flat_map(|i| (0..cols).map(move |j| format!("{prefix}_{i}_{j}"))).collect()
}

fn matrix_entries(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

/// Riccati and Chandrasekhar covariance paths of the model linearized about the prior mean.
pub fn run_riccati(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, HarnessError> {
    let started = Instant::now();
    let op = cfg.require_observation()?;
    let lin = op
        .linear()
        .map_err(|e| HarnessError::Config { key: "observation.functionals".into(), message: e.to_string() })?;
    let mut ctx = Context::new(cfg, opts, "riccati")?;
    let basis = cfg.basis();
    let x0 = basis.from_real(cfg.prior.mean.as_slice(), 0.0)?;
    let amat: LinearizedOperator = eval_jacobian(&x0, basis);
    let f = cfg.model.forcing_matrix(&x0);
    let r = &cfg.riccati;
    let n = basis.real_dim();
    let path = riccati_path(&cfg.prior.cov, &amat, &lin, &f, r.t_end, r.dt, r.record_every)?;
    let mut t = Table::new(std::iter::once("time".to_string()).chain(matrix_header("p", n, n)).collect());
    for (time, p) in path.times.iter().zip(&path.p) {
        t.push_numbers(std::iter::once(*time).chain(matrix_entries(p)));
    }
    ctx.out.write_table("riccati.csv", &t)?;
    let last = path.p.last().expect("nonempty path");
    let mut gap = None;
    if r.chandrasekhar {
        let cs = ChandrasekharState::new(&cfg.prior.cov, &amat, &lin, &f)?;
        let cp = chandrasekhar_integrate(&cs, &amat, &lin, r.t_end, r.dt, r.record_every)?;
        let k_cols = lin.h.nrows();
        let mut c = Table::new(
            std::iter::once("time".to_string())
                .chain(matrix_header("p", n, n))
                .chain(matrix_header("k", n, k_cols))
                .collect(),
        );
        for ((time, p), k) in cp.times.iter().zip(&cp.p).zip(&cp.k) {
            c.push_numbers(std::iter::once(*time).chain(matrix_entries(p)).chain(matrix_entries(k)));
        }
        ctx.out.write_table("chandrasekhar.csv", &c)?;
        let cl = cp.p.last().expect("nonempty path");
        gap = Some((cl - last).amax() / last.amax().max(f64::MIN_POSITIVE));
    }
    let mut summary = empty_summary("riccati", None);
    summary.riccati = Some(RiccatiReport { dim: n, final_trace: last.trace(), chandrasekhar_relative_gap: gap });
    summary.riccati_trace = path.times.iter().zip(&path.p).map(|(t, p)| (*t, p.trace())).collect();
    finish(&mut ctx, summary, started)
}

/// Loads a config file, mapping I/O failures to config errors on `--config`.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config { key: "--config".into(), message: format!("{}: {e}", path.display()) })?;
    ExperimentConfig::from_toml(&text, seed)
}
