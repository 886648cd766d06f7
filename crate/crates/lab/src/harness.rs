//! Sweep and training drivers. Every grid cell draws from streams keyed by
//! its coordinates and the plan seed, and rows are written in canonical
//! cell order, so output bytes depend only on the plan.

use std::path::{Path, PathBuf};

use mfl_core::activation::SmoothRelu;
use mfl_core::covariance::{predict_deff_exponent, CovarianceKind, CovarianceModel, CovarianceSpec};
use mfl_core::diagnostics::{
    classification_error, estimate_k, excess_risk_from_predictions, fit_decay_rate, lsi_bound_euclidean,
    lsi_bound_sphere, subspace_alignment, sphere_schedule, theoretical_decay_rate, DiagnosticsReport, ExcessRisk,
};
use mfl_core::loss::Loss;
use mfl_core::mfla::{run, MflaConfig, RunOptions, RunOutput, RunStatus};
use mfl_core::net::{init_gaussian, init_sphere_uniform, predictions, Activation, ParticleEnsemble, Space};
use mfl_core::planner::{plan_hyperparameters, HyperParams, PlanInput};
use mfl_core::rng::CounterNoise;
use mfl_core::sphere::{default_rho, planted_teacher, run_sphere, teacher_dataset, SphereConfig};
use mfl_core::tasks::{fnv1a, sample_directions, Dataset, DirectionPolicy, Task, TaskSpec};
use mfl_core::trace::{Clock, Control, Observer, TraceRecord};
use serde::Serialize;

use crate::config::{ExperimentKind, ExperimentPlan, InitSpec};
use crate::io::{
    create, csv_writer, fmt_f64, fmt_opt, read_checkpoint, write_checkpoint, write_dataset, write_json, ActivationMeta,
    CheckpointMeta, DatasetMeta, TraceWriter, SCHEMA_VERSION,
};
use crate::{io_err, LabError, Result};

/// Purpose tags for [`derive_seed`].
pub mod tag {
    pub const DIRECTIONS: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const TEST: u64 = 3;
    pub const INIT: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const PROBES: u64 = 6;
    pub const TEACHER: u64 = 7;
}

/// SplitMix64 of `seed` mixed with `tag`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Wall clock for the optional `seconds` column.
pub struct WallClock(std::time::Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(std::time::Instant::now())
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// The policy a covariance kind is paired with when none is given.
pub fn default_policy(kind: &CovarianceKind) -> DirectionPolicy {
    match kind {
        CovarianceKind::Spiked { .. } => DirectionPolicy::SpikeAligned { gamma1: None },
        CovarianceKind::PowerLaw { .. } => DirectionPolicy::SpectrumAligned { gamma: None },
        _ => DirectionPolicy::RandomOrthonormal,
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(io_err(path))
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

#[derive(Serialize)]
struct Metadata<'a> {
    schema_version: u32,
    kind: &'static str,
    config: String,
    git_describe: String,
    seeds: &'a [u64],
    files: Vec<String>,
}

fn write_metadata(plan: &ExperimentPlan, files: &[PathBuf]) -> Result<()> {
    let meta = Metadata {
        schema_version: SCHEMA_VERSION,
        kind: plan.kind.name(),
        config: plan.to_toml(),
        git_describe: git_describe(),
        seeds: &plan.seeds,
        files: files.iter().map(|p| p.display().to_string()).collect(),
    };
    write_json(&plan.output.dir.join(format!("{}_meta.json", plan.kind.name())), &meta)
}

fn cell_key(parts: &[f64]) -> u64 {
    let bytes: Vec<u8> = parts.iter().flat_map(|v| v.to_le_bytes()).collect();
    fnv1a(&bytes)
}

/// Mean `d_eff` over `draws` direction draws per seed.
fn mean_deff(kind: &CovarianceKind, policy: DirectionPolicy, d: usize, k: usize, seeds: &[u64], draws: usize, key: u64) -> Result<f64> {
    let spec = CovarianceSpec { d, kind: kind.clone() };
    let model = CovarianceModel::build(&spec)?;
    let policy = match (policy, kind) {
        (DirectionPolicy::SpikeAligned { gamma1: None }, CovarianceKind::Spiked { gamma1, .. }) => {
            DirectionPolicy::SpikeAligned { gamma1: Some(*gamma1) }
        }
        (DirectionPolicy::SpectrumAligned { gamma: None }, CovarianceKind::PowerLaw { gamma, .. }) => {
            DirectionPolicy::SpectrumAligned { gamma: Some(*gamma) }
        }
        (p, _) => p,
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for &seed in seeds {
        for r in 0..draws {
            let s = derive_seed(derive_seed(seed, key), (d as u64) << 16 | r as u64);
            let dirs = sample_directions(d, k, policy, &model, s)?;
            total += dirs.covariance.effective_dimension(&dirs.u)?;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeffPoint {
    pub arm: String,
    pub d: usize,
    pub d_eff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeRow {
    pub arm: String,
    pub slope_measured: f64,
    pub slope_predicted: Option<f64>,
}

impl SlopeRow {
    pub fn abs_dev(&self) -> Option<f64> {
        self.slope_predicted.map(|p| (self.slope_measured - p).abs())
    }
}

/// `d_eff` against `d` for every arm; writes `deff_scaling.csv` and
/// `deff_slopes.csv`.
pub fn run_deff_scaling(plan: &ExperimentPlan) -> Result<(Vec<DeffPoint>, Vec<SlopeRow>)> {
    let g = &plan.grid;
    let mut points = Vec::new();
    let mut slopes = Vec::new();
    for arm in &g.arms {
        let policy = arm.direction_policy.unwrap_or_else(|| default_policy(&arm.covariance));
        let key = fnv1a(arm.label.as_bytes());
        let mut ys = Vec::new();
        for &d in &g.dims {
            let v = mean_deff(&arm.covariance, policy, d, plan.task.k, &plan.seeds, g.direction_draws, key)?;
            points.push(DeffPoint { arm: arm.label.clone(), d, d_eff: v });
            ys.push(v);
        }
        let xs: Vec<f64> = g.dims.iter().map(|&d| d as f64).collect();
        slopes.push(SlopeRow {
            arm: arm.label.clone(),
            slope_measured: loglog_slope(&xs, &ys),
            slope_predicted: predict_deff_exponent(&arm.covariance).ok(),
        });
    }
    let dir = &plan.output.dir;
    let kind_of = |label: &str| {
        let arm = g.arms.iter().find(|a| a.label == label).expect("rows come from arms");
        kind_name(&arm.covariance)
    };
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let pred = slopes.iter().find(|s| s.arm == p.arm).and_then(|s| s.slope_predicted);
            vec![p.arm.clone(), kind_of(&p.arm).into(), p.d.to_string(), fmt_f64(p.d_eff), fmt_opt(pred)]
        })
        .collect();
    let f1 = dir.join("deff_scaling.csv");
    write_csv(&f1, &["arm", "kind", "d", "d_eff", "slope_predicted"], &rows)?;
    let rows: Vec<Vec<String>> = slopes
        .iter()
        .map(|s| {
            vec![
                s.arm.clone(),
                kind_of(&s.arm).into(),
                fmt_f64(s.slope_measured),
                fmt_opt(s.slope_predicted),
                fmt_opt(s.abs_dev()),
            ]
        })
        .collect();
    let f2 = dir.join("deff_slopes.csv");
    write_csv(&f2, &["arm", "kind", "slope_measured", "slope_predicted", "abs_dev"], &rows)?;
    write_metadata(plan, &[f1, f2])?;
    Ok((points, slopes))
}

fn kind_name(kind: &CovarianceKind) -> &'static str {
    match kind {
        CovarianceKind::Isotropic => "isotropic",
        CovarianceKind::Spiked { .. } => "spiked",
        CovarianceKind::PowerLaw { .. } => "power_law",
        CovarianceKind::Explicit { .. } => "explicit",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseCell {
    pub alpha: f64,
    pub gamma: f64,
    pub slope_measured: f64,
    pub slope_predicted: f64,
}

impl PhaseCell {
    pub fn abs_dev(&self) -> f64 {
        (self.slope_measured - self.slope_predicted).abs()
    }
}

/// Power-law exponents over the `(α, γ)` grid; writes `phase_grid.csv`.
pub fn run_phase_grid(plan: &ExperimentPlan) -> Result<Vec<PhaseCell>> {
    let g = &plan.grid;
    let xs: Vec<f64> = g.dims.iter().map(|&d| d as f64).collect();
    let mut cells = Vec::new();
    for &alpha in &g.alpha {
        for &gamma in &g.gamma {
            let kind = CovarianceKind::PowerLaw { alpha, gamma };
            let policy = DirectionPolicy::SpectrumAligned { gamma: None };
            let key = cell_key(&[alpha, gamma]);
            let ys = g
                .dims
                .iter()
                .map(|&d| mean_deff(&kind, policy, d, plan.task.k, &plan.seeds, g.direction_draws, key))
                .collect::<Result<Vec<_>>>()?;
            cells.push(PhaseCell {
                alpha,
                gamma,
                slope_measured: loglog_slope(&xs, &ys),
                slope_predicted: predict_deff_exponent(&kind)?,
            });
        }
    }
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| vec![fmt_f64(c.alpha), fmt_f64(c.gamma), fmt_f64(c.slope_measured), fmt_f64(c.slope_predicted), fmt_f64(c.abs_dev())])
        .collect();
    let f = plan.output.dir.join("phase_grid.csv");
    write_csv(&f, &["alpha", "gamma", "slope_measured", "slope_predicted", "abs_dev"], &rows)?;
    write_metadata(plan, &[f])?;
    Ok(cells)
}

/// A realized training problem for one seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub task: Task,
    pub train: Dataset,
    pub test: Dataset,
    pub teacher: Option<ParticleEnsemble>,
    pub hp: HyperParams,
    pub act: Activation,
    pub eta: f64,
    pub beta: f64,
    pub lambda: f64,
    pub rho: f64,
    pub seed: u64,
}

impl Prepared {
    pub fn sign_valued(&self) -> bool {
        self.teacher.is_none() && self.task.link.is_sign_valued()
    }

    pub fn test_meta(&self) -> DatasetMeta {
        DatasetMeta {
            d: self.test.d,
            n: self.test.n,
            bias: self.test.bias,
            seed: self.test.seed,
            task_hash: self.test.task_hash,
            noise_std: self.task.spec.noise_std,
            noise_law: self.task.spec.noise_law,
            sign_valued: self.sign_valued(),
            directions: if self.teacher.is_none() { Some(self.task.directions.clone()) } else { None },
        }
    }
}

pub fn activation_of(plan: &ExperimentPlan) -> Result<Activation> {
    Ok(match plan.network.space {
        Space::Euclidean => Activation::Paired(SmoothRelu::new(plan.network.kappa, plan.network.iota)?),
        Space::Sphere => Activation::Sphere(plan.network.sphere_activation),
    })
}

/// Realizes the task, datasets and hyperparameters for `seed`.
pub fn prepare(plan: &ExperimentPlan, spec: &TaskSpec, n_train: usize, seed: u64) -> Result<Prepared> {
    let task = Task::realize(spec, n_train, plan.dynamics.q, plan.dynamics.sigma_u, derive_seed(seed, tag::DIRECTIONS))?;
    let dy = &plan.dynamics;
    let input = PlanInput {
        n: n_train as f64,
        lambda_tilde: dy.lambda_tilde,
        epsilon: dy.epsilon,
        q: dy.q,
        kappa: plan.network.kappa,
        eta_practical: dy.eta,
        m: plan.network.m,
        iterations: dy.steps as usize,
        sigma_u: dy.sigma_u,
        loss_lipschitz: dy.loss.lipschitz(),
    };
    let hp = plan_hyperparameters(&task.covariance, &task.directions, &input)?;
    let act = activation_of(plan)?;
    let d = spec.d;
    let (train, test, teacher) = match (plan.network.space, plan.network.teacher_m) {
        (Space::Sphere, Some(tm)) => {
            let phi = plan.network.sphere_activation;
            let teacher = planted_teacher(d, tm, derive_seed(seed, tag::TEACHER))?;
            let sd = spec.noise_std;
            let train = teacher_dataset(&teacher, phi, &task.covariance, n_train, sd, derive_seed(seed, tag::TRAIN))?;
            let test = teacher_dataset(&teacher, phi, &task.covariance, plan.data.n_test, sd, derive_seed(seed, tag::TEST))?;
            (train, test, Some(teacher))
        }
        _ => {
            let train = task.generate_dataset(n_train, derive_seed(seed, tag::TRAIN))?;
            let test = task.generate_dataset(plan.data.n_test, derive_seed(seed, tag::TEST))?;
            (train, test, None)
        }
    };
    let rho = dy.rho.unwrap_or_else(|| default_rho(d));
    let schedule_beta = match (plan.diagnostics.delta_bar, plan.diagnostics.epsilon_bar) {
        (Some(db), Some(eb)) if plan.network.space == Space::Sphere => Some(db / eb),
        _ => None,
    };
    Ok(Prepared {
        eta: dy.eta.unwrap_or(hp.eta_practical),
        beta: dy.beta.or(schedule_beta).unwrap_or(hp.beta),
        lambda: dy.lambda.unwrap_or(hp.lambda),
        task,
        train,
        test,
        teacher,
        hp,
        act,
        rho,
        seed,
    })
}

/// Stops on the plan's early-stopping rules, then defers to `inner`.
struct Stopper<'a> {
    test01: Option<f64>,
    train_ratio: Option<f64>,
    initial: Option<f64>,
    inner: &'a mut dyn Observer,
}

impl Observer for Stopper<'_> {
    fn record(&mut self, rec: &TraceRecord) -> Control {
        let first = *self.initial.get_or_insert(rec.train_risk);
        let inner = self.inner.record(rec);
        let hit01 = matches!((self.test01, rec.test01), (Some(t), Some(e)) if e <= t);
        let hit_ratio = matches!(self.train_ratio, Some(r) if rec.train_risk <= r * first);
        if inner == Control::Stop || hit01 || hit_ratio {
            Control::Stop
        } else {
            Control::Continue
        }
    }
}

/// The plan's initial ensemble for `seed`.
pub fn initial_ensemble(plan: &ExperimentPlan, d: usize, seed: u64) -> Result<ParticleEnsemble> {
    let m = plan.network.m;
    let s = derive_seed(seed, tag::INIT);
    Ok(match (&plan.network.init, plan.network.space) {
        (InitSpec::Checkpoint { path }, _) => {
            let (e, _) = read_checkpoint(path)?;
            if e.space() != plan.network.space || e.dim() != d {
                return Err(LabError::Config { key: "network.init.path".into(), reason: "checkpoint does not match the network".into() });
            }
            e
        }
        (InitSpec::Gaussian { std }, Space::Euclidean) => init_gaussian(m, d, *std, s)?,
        (_, Space::Sphere) => init_sphere_uniform(m, d, s)?,
        (InitSpec::Uniform, Space::Euclidean) => {
            return Err(LabError::Config { key: "network.init".into(), reason: "uniform init is sphere-only".into() })
        }
    })
}

/// Trains one prepared problem from `init`, starting at `start_step`.
pub fn train_prepared(
    plan: &ExperimentPlan,
    p: &Prepared,
    init: ParticleEnsemble,
    start_step: u64,
    observer: &mut dyn Observer,
) -> Result<RunOutput> {
    let dy = &plan.dynamics;
    let noise = CounterNoise::new(derive_seed(p.seed, tag::NOISE));
    let clock = WallClock::start();
    let opts = RunOptions {
        test: Some(&p.test),
        directions: if p.teacher.is_none() { Some(&p.task.directions) } else { None },
        clock: if plan.output.timing { Some(&clock) } else { None },
        start_step,
        parallel: dy.parallel,
    };
    let steps = dy.steps.saturating_sub(start_step);
    let mut stopper = Stopper { test01: dy.stop_test01, train_ratio: dy.stop_train_ratio, initial: None, inner: observer };
    Ok(match p.act {
        Activation::Paired(a) => {
            let config = MflaConfig {
                eta: p.eta,
                beta: p.beta,
                lambda: p.lambda,
                loss: dy.loss,
                steps,
                eval_every: dy.eval_every,
                seed: p.seed,
            };
            run(init, &a, &p.train, &config, &noise, opts, &mut stopper)?
        }
        Activation::Sphere(phi) => {
            let config = SphereConfig {
                eta: p.eta,
                beta: p.beta,
                loss: dy.loss,
                activation: phi,
                steps,
                eval_every: dy.eval_every,
                seed: p.seed,
                rho: Some(p.rho),
                renormalize_every: dy.renormalize_every,
            };
            run_sphere(init, &p.train, &config, &noise, opts, &mut stopper)?
        }
    })
}

/// Diagnostics for a trained ensemble against a labelled test set.
#[allow(clippy::too_many_arguments)]
pub fn diagnose(
    ens: &ParticleEnsemble,
    act: &Activation,
    test: &Dataset,
    meta: &DatasetMeta,
    loss: &Loss,
    eta: f64,
    beta: f64,
    lambda: f64,
    rho: f64,
    plan_diag: &crate::config::DiagnosticsConfig,
    trace: Option<&[TraceRecord]>,
    probe_seed: u64,
) -> Result<DiagnosticsReport> {
    let preds = predictions(ens, act, test)?;
    let ExcessRisk { value, stderr, .. } = excess_risk_from_predictions(&preds, &test.labels, loss, meta.noise_std, meta.noise_law)?;
    let c_rho = loss.lipschitz();
    let mut report = DiagnosticsReport {
        space: ens.space(),
        excess_risk: value,
        excess_risk_stderr: stderr,
        classification_error: meta.sign_valued.then(|| classification_error(&preds, &test.labels)),
        alignment: match &meta.directions {
            Some(u) => Some(subspace_alignment(ens, u)?),
            None => None,
        },
        c_lsi_euclidean: None,
        c_lsi_sphere: None,
        k_estimate: None,
        k_upper: None,
        sphere_schedule: None,
        decay: None,
        theoretical_rate: None,
    };
    match act {
        Activation::Paired(a) => {
            let b = lsi_bound_euclidean(beta, lambda, a.iota(), c_rho);
            report.theoretical_rate = theoretical_decay_rate(eta, beta, &b);
            report.c_lsi_euclidean = Some(b);
        }
        Activation::Sphere(phi) => {
            let k = estimate_k(test, phi, plan_diag.k_probes.max(1), probe_seed)?;
            let b = lsi_bound_sphere(test.d as f64, rho, beta, c_rho, k.estimate);
            report.theoretical_rate = theoretical_decay_rate(eta, beta, &b);
            report.c_lsi_sphere = Some(b);
            report.k_estimate = Some(k.estimate);
            report.k_upper = Some(k.upper);
            if let (Some(db), Some(eb), Some(f0)) = (plan_diag.delta_bar, plan_diag.epsilon_bar, trace.and_then(|t| t.first())) {
                report.sphere_schedule = sphere_schedule(db, eb, rho, c_rho, k.estimate, f0.total).ok();
            }
        }
    }
    if let Some(t) = trace {
        let steps: Vec<f64> = t.iter().map(|r| r.step as f64).collect();
        let totals: Vec<f64> = t.iter().map(|r| r.total).collect();
        report.decay = fit_decay_rate(&steps, &totals, plan_diag.burn_in, plan_diag.decay_margin).ok();
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SingleSummary {
    pub seed: u64,
    pub status: RunStatus,
    pub steps: u64,
    pub report: DiagnosticsReport,
    pub hyperparams: HyperParams,
    pub eta: f64,
    pub beta: f64,
    pub lambda: f64,
    pub dir: PathBuf,
}

fn activation_meta(act: &Activation) -> ActivationMeta {
    match act {
        Activation::Paired(a) => ActivationMeta::SmoothRelu { kappa: a.kappa(), iota: a.iota() },
        Activation::Sphere(phi) => ActivationMeta::Sphere { phi: *phi },
    }
}

/// One training run per seed, with trace, checkpoint, test set and report
/// under `<dir>/train_single/seed<s>/`.
pub fn run_train_single(plan: &ExperimentPlan, resume: Option<&Path>) -> Result<Vec<SingleSummary>> {
    let mut out = Vec::new();
    let mut files = Vec::new();
    for &seed in &plan.seeds {
        let p = prepare(plan, &plan.task, plan.data.n_train, seed)?;
        let (init, start) = match resume {
            Some(path) => {
                let (e, meta) = read_checkpoint(path)?;
                (e, meta.map_or(0, |m| m.step))
            }
            None => (initial_ensemble(plan, plan.task.d, seed)?, 0),
        };
        let dir = plan.output.dir.join("train_single").join(format!("seed{seed}"));
        let trace_path = dir.join("trace.csv");
        let mut sink: Vec<TraceRecord> = Vec::new();
        let mut writer = TraceWriter::new(create(&trace_path)?, Some(&mut sink))?;
        let result = train_prepared(plan, &p, init, start, &mut writer)?;
        let trace = writer.finish()?;
        let steps = result.last().step;
        let ckpt = dir.join("checkpoint.mflb");
        let meta = CheckpointMeta {
            space: result.ensemble.space(),
            m: result.ensemble.len(),
            d: result.ensemble.dim(),
            step: steps,
            seed,
            activation: activation_meta(&p.act),
            eta: p.eta,
            beta: p.beta,
            lambda: p.lambda,
            loss: plan.dynamics.loss,
        };
        write_checkpoint(&ckpt, &result.ensemble, &meta)?;
        let test_path = dir.join("test.csv");
        let test_meta = p.test_meta();
        write_dataset(&test_path, &p.test, &test_meta)?;
        let report = diagnose(
            &result.ensemble,
            &p.act,
            &p.test,
            &test_meta,
            &plan.dynamics.loss,
            p.eta,
            p.beta,
            p.lambda,
            p.rho,
            &plan.diagnostics,
            Some(&trace),
            derive_seed(seed, tag::PROBES),
        )?;
        let summary = SingleSummary {
            seed,
            status: result.status,
            steps,
            report,
            hyperparams: p.hp.clone(),
            eta: p.eta,
            beta: p.beta,
            lambda: p.lambda,
            dir: dir.clone(),
        };
        let report_path = dir.join("report.json");
        write_json(&report_path, &summary)?;
        files.extend([trace_path, ckpt, test_path, report_path]);
        out.push(summary);
    }
    write_metadata(plan, &files)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRow {
    pub n: usize,
    pub arm: String,
    pub seed: u64,
    pub d_eff: f64,
    pub excess_risk: Option<f64>,
    pub test01: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSummary {
    pub n: usize,
    pub arm: String,
    pub mean_excess_risk: Option<f64>,
    pub mean_test01: Option<f64>,
    pub runs_ok: usize,
}

fn status_name(s: &RunStatus) -> &'static str {
    match s {
        RunStatus::Completed => "completed",
        RunStatus::Stopped { .. } => "stopped",
        RunStatus::Aborted { .. } => "aborted",
    }
}

/// Matched training runs over arms × n × seeds; writes
/// `sample_complexity.csv` and `sample_complexity_summary.csv`.
pub fn run_sample_complexity(plan: &ExperimentPlan) -> Result<(Vec<SampleRow>, Vec<SampleSummary>)> {
    let mut rows = Vec::new();
    for arm in &plan.grid.arms {
        let mut spec = plan.task.clone();
        spec.covariance = arm.covariance.clone();
        spec.direction_policy = arm.direction_policy.unwrap_or_else(|| default_policy(&arm.covariance));
        for &n in &plan.grid.n {
            for &seed in &plan.seeds {
                rows.push(sample_row(plan, &spec, &arm.label, n, seed)?);
            }
        }
    }
    let mut summary = Vec::new();
    for arm in &plan.grid.arms {
        for &n in &plan.grid.n {
            let ok: Vec<&SampleRow> = rows.iter().filter(|r| r.arm == arm.label && r.n == n && r.excess_risk.is_some()).collect();
            let mean = |f: &dyn Fn(&SampleRow) -> Option<f64>| {
                (!ok.is_empty()).then(|| ok.iter().filter_map(|r| f(r)).sum::<f64>() / ok.len() as f64)
            };
            summary.push(SampleSummary {
                n,
                arm: arm.label.clone(),
                mean_excess_risk: mean(&|r| r.excess_risk),
                mean_test01: mean(&|r| r.test01),
                runs_ok: ok.len(),
            });
        }
    }
    let dir = &plan.output.dir;
    let f1 = dir.join("sample_complexity.csv");
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.arm.clone(),
                r.seed.to_string(),
                fmt_f64(r.d_eff),
                fmt_opt(r.excess_risk),
                fmt_opt(r.test01),
                r.status.clone(),
            ]
        })
        .collect();
    write_csv(&f1, &["n", "covariance", "seed", "d_eff", "excess_risk", "test01", "status"], &body)?;
    let f2 = dir.join("sample_complexity_summary.csv");
    let body: Vec<Vec<String>> = summary
        .iter()
        .map(|s| vec![s.n.to_string(), s.arm.clone(), fmt_opt(s.mean_excess_risk), fmt_opt(s.mean_test01), s.runs_ok.to_string()])
        .collect();
    write_csv(&f2, &["n", "covariance", "mean_excess_risk", "mean_test01", "runs_ok"], &body)?;
    write_metadata(plan, &[f1, f2])?;
    Ok((rows, summary))
}

fn sample_row(plan: &ExperimentPlan, spec: &TaskSpec, label: &str, n: usize, seed: u64) -> Result<SampleRow> {
    let p = prepare(plan, spec, n, seed)?;
    let d_eff = p.hp.d_eff;
    let init = initial_ensemble(plan, spec.d, seed)?;
    let mut sink: Vec<TraceRecord> = Vec::new();
    let failed = |status: &str| SampleRow {
        n,
        arm: label.to_string(),
        seed,
        d_eff,
        excess_risk: None,
        test01: None,
        status: status.into(),
    };
    let out = match train_prepared(plan, &p, init, 0, &mut sink) {
        Ok(o) => o,
        Err(LabError::Core(_)) => return Ok(failed("error")),
        Err(e) => return Err(e),
    };
    if let RunStatus::Aborted { .. } = out.status {
        return Ok(failed("aborted"));
    }
    let preds = predictions(&out.ensemble, &p.act, &p.test)?;
    let meta = p.test_meta();
    let ex = excess_risk_from_predictions(&preds, &p.test.labels, &plan.dynamics.loss, meta.noise_std, meta.noise_law)?;
    Ok(SampleRow {
        n,
        arm: label.to_string(),
        seed,
        d_eff,
        excess_risk: Some(ex.value),
        test01: Some(classification_error(&preds, &p.test.labels)),
        status: status_name(&out.status).into(),
    })
}

/// Dispatches on the plan kind.
pub fn run_plan(plan: &ExperimentPlan) -> Result<()> {
    match plan.kind {
        ExperimentKind::DeffScaling => run_deff_scaling(plan).map(|_| ()),
        ExperimentKind::PhaseGrid => run_phase_grid(plan).map(|_| ()),
        ExperimentKind::SampleComplexity => run_sample_complexity(plan).map(|_| ()),
        ExperimentKind::TrainSingle => run_train_single(plan, None).map(|_| ()),
    }
}
