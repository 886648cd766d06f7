//! Mean-field Langevin algorithm: the two-phase particle update and the
//! cadenced run loop shared by the Euclidean and sphere dynamics.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{classification_error, subspace_alignment};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm, Mat};
use crate::loss::Loss;
use crate::math::sqrt;
use crate::net::{
    evaluate, first_variation_gradients, mean_loss, project_tangent_in_place, risk_from_predictions, Activation,
    Evaluation, ParticleEnsemble, Space,
};
use crate::rng::NoiseSource;
use crate::sphere::exp_map_in_place;
use crate::tasks::Dataset;
use crate::trace::{Clock, Control, Observer, TraceRecord};

pub use crate::net::{init_gaussian, init_sphere_uniform};

/// Default record cadence.
pub const DEFAULT_EVAL_EVERY: u64 = 100;
/// Sphere rows are renormalized every this many steps.
pub const DEFAULT_RENORMALIZE_EVERY: u64 = 100;

fn default_eval_every() -> u64 {
    DEFAULT_EVAL_EVERY
}

/// Configuration of a Euclidean MFLA run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MflaConfig {
    pub eta: f64,
    /// Inverse temperature; `f64::INFINITY` switches the noise off.
    pub beta: f64,
    pub lambda: f64,
    #[serde(default)]
    pub loss: Loss,
    pub steps: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    pub seed: u64,
}

impl MflaConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(self.eta, self.beta, self.eval_every)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", "must be finite and nonnegative"));
        }
        self.loss.validate()
    }
}

pub(crate) fn check_common(eta: f64, beta: f64, eval_every: u64) -> Result<()> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(invalid("eta", "must be finite and nonnegative"));
    }
    if !(beta > 0.0) {
        return Err(invalid("beta", "must be positive (infinity disables noise)"));
    }
    if eval_every == 0 {
        return Err(invalid("eval_every", "must be at least 1"));
    }
    Ok(())
}

/// Noise scale `√(2η/β)`.
pub fn noise_scale(eta: f64, beta: f64) -> f64 {
    if beta.is_infinite() {
        0.0
    } else {
        sqrt(2.0 * eta / beta)
    }
}

/// Per-step geometric statistics. Only the sphere fills them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    /// `max_j |⟨t_j, w_j⟩| / ‖t_j‖`
    pub max_tangency: f64,
    /// `max_j |‖w_j‖ − 1|` after the retraction.
    pub max_norm_deviation: f64,
}

/// Euclidean Langevin update of one particle:
/// `w ← w − η g + √(2η/β) ξ`, with `ξ` read from `noise` at `(step, j)`.
pub fn langevin_update(
    w: &[f64],
    g: &[f64],
    eta: f64,
    beta: f64,
    noise: &dyn NoiseSource,
    step: u64,
    j: usize,
    out: &mut [f64],
) {
    let s = noise_scale(eta, beta);
    if s > 0.0 {
        noise.fill(step, j, out);
    } else {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    for ((o, wi), gi) in out.iter_mut().zip(w).zip(g) {
        *o = wi - eta * gi + s * *o;
    }
}

/// Sphere update of one particle: the tangent step
/// `t = −η P g + √(2η/β) P ξ` followed by the exponential map. Returns the
/// tangency residual `|⟨t, w⟩| / ‖t‖` (zero when `t = 0`).
pub fn sphere_update(
    w: &[f64],
    g: &[f64],
    eta: f64,
    beta: f64,
    noise: &dyn NoiseSource,
    step: u64,
    j: usize,
    out: &mut [f64],
) -> f64 {
    let s = noise_scale(eta, beta);
    if s > 0.0 {
        noise.fill(step, j, out);
        project_tangent_in_place(w, out);
    } else {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    for (o, gi) in out.iter_mut().zip(g) {
        *o = s * *o - eta * gi;
    }
    let tn = norm(out);
    let residual = if tn > 0.0 { dot(out, w).abs() / tn } else { 0.0 };
    exp_map_in_place(w, out);
    residual
}

/// Reusable buffers for the two-phase step.
#[derive(Debug)]
pub struct Trainer<'a> {
    act: Activation,
    data: &'a Dataset,
    loss: Loss,
    lambda: f64,
    eta: f64,
    beta: f64,
    parallel: bool,
    eval: Evaluation,
    grad: Vec<f64>,
    next: Vec<f64>,
    stats: Vec<(f64, f64)>,
}

impl<'a> Trainer<'a> {
    pub fn new(act: Activation, data: &'a Dataset, loss: Loss, lambda: f64, eta: f64, beta: f64) -> Self {
        let lambda = if act.space() == Space::Sphere { 0.0 } else { lambda };
        Self {
            act,
            data,
            loss,
            lambda,
            eta,
            beta,
            parallel: false,
            eval: Evaluation::new(),
            grad: Vec::new(),
            next: Vec::new(),
            stats: Vec::new(),
        }
    }

    /// Opt-in parallel phases (requires the `parallel` feature; a no-op otherwise).
    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    /// Phase one for the current weights; cheap if already current.
    pub fn refresh(&mut self, ens: &ParticleEnsemble) -> Result<&Evaluation> {
        if !self.eval.is_current(ens) {
            evaluate(ens, &self.act, self.data, self.parallel, &mut self.eval)?;
        }
        Ok(&self.eval)
    }

    pub fn predictions(&self) -> &[f64] {
        self.eval.predictions()
    }

    /// One MFLA step. On a non-finite update the ensemble is left untouched.
    pub fn step(&mut self, ens: &mut ParticleEnsemble, noise: &dyn NoiseSource, step: u64) -> Result<StepStats> {
        if !self.eval.is_current(ens) {
            evaluate(ens, &self.act, self.data, self.parallel, &mut self.eval)?;
        }
        if self.eval.predictions().iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        first_variation_gradients(
            ens,
            &self.act,
            self.data,
            &self.loss,
            self.lambda,
            &mut self.eval,
            self.parallel,
            &mut self.grad,
        )?;
        let width = ens.width();
        let m = ens.len();
        self.next.resize(m * width, 0.0);
        self.stats.resize(m, (0.0, 0.0));
        let (eta, beta, space) = (self.eta, self.beta, ens.space());
        let w = ens.weights();
        let grad = &self.grad;
        let update = |(j, (out, st)): (usize, (&mut [f64], &mut (f64, f64)))| {
            let wj = &w[j * width..(j + 1) * width];
            let gj = &grad[j * width..(j + 1) * width];
            match space {
                Space::Euclidean => langevin_update(wj, gj, eta, beta, noise, step, j, out),
                Space::Sphere => {
                    let tang = sphere_update(wj, gj, eta, beta, noise, step, j, out);
                    *st = (tang, (norm(out) - 1.0).abs());
                }
            }
        };
        let rows = self.next.chunks_mut(width).zip(self.stats.iter_mut());
        if self.parallel {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                self.next
                    .par_chunks_mut(width)
                    .zip(self.stats.par_iter_mut())
                    .enumerate()
                    .for_each(update);
            }
            #[cfg(not(feature = "parallel"))]
            rows.enumerate().for_each(update);
        } else {
            rows.enumerate().for_each(update);
        }
        if self.next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        let mut stats = StepStats::default();
        for &(t, nd) in &self.stats {
            stats.max_tangency = stats.max_tangency.max(t);
            stats.max_norm_deviation = stats.max_norm_deviation.max(nd);
        }
        ens.replace_weights(&mut self.next);
        Ok(stats)
    }
}

/// Optional extras for a run.
#[derive(Clone, Copy, Default)]
pub struct RunOptions<'a> {
    pub test: Option<&'a Dataset>,
    /// Rows `u_i/√k`; enables the alignment column.
    pub directions: Option<&'a Mat>,
    pub clock: Option<&'a dyn Clock>,
    /// First step index (non-zero when resuming).
    pub start_step: u64,
    pub parallel: bool,
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// An observer asked to stop at this step.
    Stopped { step: u64 },
    /// A non-finite value appeared while computing this step.
    Aborted { step: u64 },
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Last finite ensemble.
    pub ensemble: ParticleEnsemble,
    pub trace: Vec<TraceRecord>,
    pub status: RunStatus,
    /// Largest tangency residual seen (sphere).
    pub max_tangency: f64,
    /// Largest norm deviation seen before a renormalization (sphere).
    pub max_norm_deviation: f64,
}

impl RunOutput {
    pub fn last(&self) -> &TraceRecord {
        self.trace.last().expect("runs always emit the initial record")
    }
}

/// Generic loop shared by [`run`] and [`crate::sphere::run_sphere`].
pub(crate) struct LoopSpec {
    pub eta: f64,
    pub beta: f64,
    pub lambda: f64,
    pub loss: Loss,
    pub steps: u64,
    pub eval_every: u64,
    pub renormalize_every: u64,
}

pub(crate) fn run_loop(
    mut ens: ParticleEnsemble,
    act: Activation,
    train: &Dataset,
    spec: LoopSpec,
    noise: &dyn NoiseSource,
    opts: RunOptions<'_>,
    observer: &mut dyn Observer,
) -> Result<RunOutput> {
    if act.space() != ens.space() {
        return Err(Error::SpaceMismatch("activation does not match ensemble space"));
    }
    if let Some(test) = opts.test {
        if test.d != ens.dim() {
            return Err(Error::DimensionMismatch { expected: ens.dim(), found: test.d });
        }
    }
    let mut trainer = Trainer::new(act, train, spec.loss, spec.lambda, spec.eta, spec.beta).parallel(opts.parallel);
    let start = opts.start_step;
    let end = start + spec.steps;
    let t0 = opts.clock.map_or(0.0, |c| c.seconds());
    let mut trace = Vec::new();
    let mut status = RunStatus::Completed;
    let mut max_tangency: f64 = 0.0;
    let mut max_dev: f64 = ens.max_norm_deviation_if_sphere();
    let mut s = start;
    loop {
        trainer.refresh(&ens)?;
        if s == start || (s - start) % spec.eval_every == 0 || s == end {
            let rb = risk_from_predictions(&ens, trainer.predictions(), &train.labels, &spec.loss, spec.lambda);
            let (test_risk, test01) = match opts.test {
                Some(test) => {
                    let p = crate::net::predictions(&ens, &act, test)?;
                    (Some(mean_loss(&p, &test.labels, &spec.loss)), Some(classification_error(&p, &test.labels)))
                }
                None => (None, None),
            };
            let alignment = match opts.directions {
                Some(u) => subspace_alignment(&ens, u).ok(),
                None => None,
            };
            let rec = TraceRecord {
                step: s,
                train_risk: rb.risk,
                reg: rb.reg,
                total: rb.total,
                test_risk,
                test01,
                alignment,
                seconds: opts.clock.map_or(0.0, |c| c.seconds() - t0),
                noise_stream: s,
            };
            if !rec.is_finite() {
                status = RunStatus::Aborted { step: s };
                break;
            }
            trace.push(rec);
            if observer.record(&rec) == Control::Stop && s != end {
                status = RunStatus::Stopped { step: s };
                break;
            }
        }
        if s == end {
            break;
        }
        match trainer.step(&mut ens, noise, s) {
            Ok(st) => {
                max_tangency = max_tangency.max(st.max_tangency);
                max_dev = max_dev.max(st.max_norm_deviation);
            }
            Err(Error::NonFinite { step }) => {
                status = RunStatus::Aborted { step };
                break;
            }
            Err(e) => return Err(e),
        }
        s += 1;
        if ens.space() == Space::Sphere && spec.renormalize_every > 0 && (s - start) % spec.renormalize_every == 0 {
            ens.renormalize();
        }
    }
    Ok(RunOutput { ensemble: ens, trace, status, max_tangency, max_norm_deviation: max_dev })
}

impl ParticleEnsemble {
    fn max_norm_deviation_if_sphere(&self) -> f64 {
        if self.space() == Space::Sphere {
            self.max_norm_deviation()
        } else {
            0.0
        }
    }
}

/// Runs `config.steps` Euclidean MFLA steps from `init`, with records every
/// `eval_every` steps plus the first and last.
pub fn run(
    init: ParticleEnsemble,
    act: &crate::activation::SmoothRelu,
    train: &Dataset,
    config: &MflaConfig,
    noise: &dyn NoiseSource,
    opts: RunOptions<'_>,
    observer: &mut dyn Observer,
) -> Result<RunOutput> {
    config.validate()?;
    if init.space() != Space::Euclidean {
        return Err(Error::SpaceMismatch("euclidean run needs a euclidean ensemble"));
    }
    let spec = LoopSpec {
        eta: config.eta,
        beta: config.beta,
        lambda: config.lambda,
        loss: config.loss,
        steps: config.steps,
        eval_every: config.eval_every,
        renormalize_every: 0,
    };
    run_loop(init, Activation::Paired(*act), train, spec, noise, opts, observer)
}

/// A single step outside a run loop.
pub fn mfla_step(
    ens: &mut ParticleEnsemble,
    act: &crate::activation::SmoothRelu,
    data: &Dataset,
    config: &MflaConfig,
    noise: &dyn NoiseSource,
    step: u64,
) -> Result<()> {
    config.validate()?;
    let mut t = Trainer::new(Activation::Paired(*act), data, config.loss, config.lambda, config.eta, config.beta);
    t.step(ens, noise, step).map(|_| ())
}
