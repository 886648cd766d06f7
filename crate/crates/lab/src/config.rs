//! Experiment plans read from TOML. Unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use mfl_core::activation::SphereActivation;
use mfl_core::covariance::CovarianceKind;
use mfl_core::loss::Loss;
use mfl_core::net::Space;
use mfl_core::tasks::{DirectionPolicy, TaskSpec};
use serde::{Deserialize, Serialize};

use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    DeffScaling,
    PhaseGrid,
    SampleComplexity,
    TrainSingle,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::DeffScaling => "deff_scaling",
            ExperimentKind::PhaseGrid => "phase_grid",
            ExperimentKind::SampleComplexity => "sample_complexity",
            ExperimentKind::TrainSingle => "train_single",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Gaussian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        std: Option<f64>,
    },
    /// Sphere ensembles start uniform on the sphere.
    Uniform,
    Checkpoint { path: PathBuf },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Gaussian { std: None }
    }
}

fn d_m() -> usize {
    256
}
fn d_kappa() -> f64 {
    4.0
}
fn d_iota() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "d_space")]
    pub space: Space,
    #[serde(default = "d_m")]
    pub m: usize,
    #[serde(default = "d_kappa")]
    pub kappa: f64,
    #[serde(default = "d_iota")]
    pub iota: f64,
    #[serde(default)]
    pub sphere_activation: SphereActivation,
    #[serde(default)]
    pub init: InitSpec,
    /// Sphere only: labels come from a planted teacher with this many
    /// particles instead of the task's link.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_m: Option<usize>,
}

fn d_space() -> Space {
    Space::Euclidean
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            space: Space::Euclidean,
            m: d_m(),
            kappa: d_kappa(),
            iota: d_iota(),
            sphere_activation: SphereActivation::default(),
            init: InitSpec::default(),
            teacher_m: None,
        }
    }
}

fn d_lambda_tilde() -> f64 {
    0.1
}
fn d_epsilon() -> f64 {
    0.5
}
fn d_one() -> f64 {
    1.0
}
fn d_steps() -> u64 {
    1000
}
fn d_every() -> u64 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    /// Step size; the planner's practical value when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Inverse temperature (`inf` disables noise); planner value when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Regularization; `λ̃ r_x²` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default = "d_lambda_tilde")]
    pub lambda_tilde: f64,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_one")]
    pub q: f64,
    #[serde(default = "d_one")]
    pub sigma_u: f64,
    #[serde(default)]
    pub loss: Loss,
    #[serde(default = "d_steps")]
    pub steps: u64,
    #[serde(default = "d_every")]
    pub eval_every: u64,
    #[serde(default = "d_every")]
    pub renormalize_every: u64,
    /// Sphere curvature constant; `(d − 2)/d` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Stop once the test 0-1 error reaches this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_test01: Option<f64>,
    /// Stop once the training risk falls to this fraction of its initial value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_train_ratio: Option<f64>,
    #[serde(default)]
    pub parallel: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        toml::from_str("").expect("all dynamics keys have defaults")
    }
}

fn d_n_train() -> usize {
    1024
}
fn d_n_test() -> usize {
    4096
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "d_n_train")]
    pub n_train: usize,
    #[serde(default = "d_n_test")]
    pub n_test: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { n_train: d_n_train(), n_test: d_n_test() }
    }
}

/// One covariance arm of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arm {
    pub label: String,
    pub covariance: CovarianceKind,
    /// Defaults to the policy matching the covariance kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction_policy: Option<DirectionPolicy>,
}

fn d_draws() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arms: Vec<Arm>,
    /// Direction draws averaged per grid point.
    #[serde(default = "d_draws")]
    pub direction_draws: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dims: vec![], n: vec![], alpha: vec![], gamma: vec![], arms: vec![], direction_draws: d_draws() }
    }
}

fn d_probes() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "d_probes")]
    pub k_probes: usize,
    /// Declared teacher entropy scale for the sphere schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_bar: Option<f64>,
    /// Target accuracy for the sphere schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_bar: Option<f64>,
    /// Records skipped before fitting the decay rate.
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_margin: Option<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { k_probes: d_probes(), delta_bar: None, epsilon_bar: None, burn_in: 0, decay_margin: None }
    }
}

fn d_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "d_dir")]
    pub dir: PathBuf,
    /// Fill the `seconds` trace column from the wall clock.
    #[serde(default)]
    pub timing: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: d_dir(), timing: false }
    }
}

fn d_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    pub task: TaskSpec,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn bad(key: &str, reason: impl Into<String>) -> LabError {
    LabError::Config { key: key.to_string(), reason: reason.into() }
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self, LabError> {
        let plan: Self = toml::from_str(text).map_err(|e| LabError::Parse(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Canonical TOML with every default spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plans always serialize")
    }

    pub fn validate(&self) -> Result<(), LabError> {
        if self.seeds.is_empty() {
            return Err(bad("seeds", "need at least one seed"));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(bad("seeds", "seeds must be distinct"));
        }
        self.task.validate().map_err(|e| bad("task", e.to_string()))?;
        let net = &self.network;
        if net.m == 0 {
            return Err(bad("network.m", "need at least one particle"));
        }
        if net.teacher_m == Some(0) {
            return Err(bad("network.teacher_m", "teacher needs at least one particle"));
        }
        if net.teacher_m.is_some() && net.space != Space::Sphere {
            return Err(bad("network.teacher_m", "planted teachers are sphere-only"));
        }
        if net.space == Space::Euclidean {
            mfl_core::activation::SmoothRelu::new(net.kappa, net.iota).map_err(|e| bad("network.kappa", e.to_string()))?;
        } else {
            net.sphere_activation.verify().map_err(|e| bad("network.sphere_activation", e.to_string()))?;
        }
        let dy = &self.dynamics;
        for (key, v) in [("dynamics.eta", dy.eta), ("dynamics.lambda", dy.lambda), ("dynamics.rho", dy.rho)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(bad(key, "must be finite and nonnegative"));
                }
            }
        }
        if let Some(b) = dy.beta {
            if !(b > 0.0) {
                return Err(bad("dynamics.beta", "must be positive (inf disables noise)"));
            }
        }
        for (key, v) in [("dynamics.lambda_tilde", dy.lambda_tilde), ("dynamics.epsilon", dy.epsilon), ("dynamics.q", dy.q)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(key, "must be positive"));
            }
        }
        if dy.eval_every == 0 {
            return Err(bad("dynamics.eval_every", "must be at least 1"));
        }
        dy.loss.validate().map_err(|e| bad("dynamics.loss", e.to_string()))?;
        if net.space == Space::Sphere && matches!(dy.loss, Loss::Squared) {
            return Err(bad("dynamics.loss", "sphere dynamics need pseudo_huber"));
        }
        if self.data.n_train == 0 {
            return Err(bad("data.n_train", "must be positive"));
        }
        if self.data.n_test == 0 {
            return Err(bad("data.n_test", "must be positive"));
        }
        let g = &self.grid;
        let need = |ok: bool, key: &str| if ok { Ok(()) } else { Err(bad(key, "grid must be nonempty")) };
        match self.kind {
            ExperimentKind::DeffScaling => {
                need(!g.dims.is_empty(), "grid.dims")?;
                need(!g.arms.is_empty(), "grid.arms")?;
            }
            ExperimentKind::PhaseGrid => {
                need(!g.dims.is_empty(), "grid.dims")?;
                need(!g.alpha.is_empty(), "grid.alpha")?;
                need(!g.gamma.is_empty(), "grid.gamma")?;
            }
            ExperimentKind::SampleComplexity => {
                need(!g.n.is_empty(), "grid.n")?;
                need(!g.arms.is_empty(), "grid.arms")?;
            }
            ExperimentKind::TrainSingle => {}
        }
        if g.dims.iter().any(|&d| d < 2) {
            return Err(bad("grid.dims", "dimensions must be at least 2"));
        }
        if g.n.contains(&0) {
            return Err(bad("grid.n", "sample counts must be positive"));
        }
        if matches!(self.kind, ExperimentKind::DeffScaling | ExperimentKind::PhaseGrid) && g.direction_draws == 0 {
            return Err(bad("grid.direction_draws", "need at least one draw"));
        }
        let labels: BTreeSet<_> = g.arms.iter().map(|a| a.label.as_str()).collect();
        if labels.len() != g.arms.len() {
            return Err(bad("grid.arms", "arm labels must be distinct"));
        }
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentPlan, LabError> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::Io { path: path.to_path_buf(), source: e })?;
    ExperimentPlan::from_toml(&text)
}
