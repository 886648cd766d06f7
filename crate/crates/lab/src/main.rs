use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mfl_core::activation::SmoothRelu;
use mfl_core::net::Activation;
use mfl_core::sphere::default_rho;
use mfl_lab::config::{parse_config, DiagnosticsConfig, ExperimentKind, ExperimentPlan};
use mfl_lab::harness::{self, derive_seed, prepare, tag};
use mfl_lab::io::{read_checkpoint, read_dataset, ActivationMeta};
use mfl_lab::{LabError, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "mfl-lab", about = "Mean-field Langevin experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Effective dimension of the configured task, per seed.
    Deff {
        #[arg(long)]
        config: PathBuf,
    },
    /// Planned hyperparameters, per seed.
    Plan {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train one network per seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run a grid experiment.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        #[arg(long)]
        config: PathBuf,
    },
    /// Report diagnostics for a checkpoint on a dataset.
    Diagnose {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Supplies `rho` and the diagnostics table.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SweepKind {
    PhaseGrid,
    SampleComplexity,
    DeffScaling,
}

fn print<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

#[derive(Serialize)]
struct DeffRow {
    seed: u64,
    d_eff: f64,
    nosw_d_eff: f64,
    r_x: f64,
}

fn deff(plan: &ExperimentPlan) -> Result<()> {
    let mut rows = Vec::new();
    for &seed in &plan.seeds {
        let p = prepare(plan, &plan.task, plan.data.n_train, seed)?;
        rows.push(DeffRow {
            seed,
            d_eff: p.task.effective_dimension()?,
            nosw_d_eff: p.task.covariance.nosw_effective_dimension(&p.task.directions)?,
            r_x: p.task.r_x,
        });
    }
    print(&rows)
}

#[derive(Serialize)]
struct PlanRow {
    seed: u64,
    eta: f64,
    beta: f64,
    lambda: f64,
    planned: mfl_core::planner::HyperParams,
}

fn plan_cmd(plan: &ExperimentPlan) -> Result<()> {
    let mut rows = Vec::new();
    for &seed in &plan.seeds {
        let p = prepare(plan, &plan.task, plan.data.n_train, seed)?;
        rows.push(PlanRow { seed, eta: p.eta, beta: p.beta, lambda: p.lambda, planned: p.hp });
    }
    print(&rows)
}

fn diagnose(checkpoint: &PathBuf, data: &PathBuf, config: Option<&PathBuf>) -> Result<()> {
    let (ens, meta) = read_checkpoint(checkpoint)?;
    let meta = meta.ok_or_else(|| LabError::Format(format!("{}: missing JSON sidecar", checkpoint.display())))?;
    let (test, test_meta) = read_dataset(data)?;
    if test.d != ens.dim() {
        return Err(LabError::Format(format!("dataset has d = {}, checkpoint has d = {}", test.d, ens.dim())));
    }
    let plan = config.map(|p| parse_config(p)).transpose()?;
    let diag = plan.as_ref().map(|p| p.diagnostics.clone()).unwrap_or_else(DiagnosticsConfig::default);
    let rho = plan.as_ref().and_then(|p| p.dynamics.rho).unwrap_or_else(|| default_rho(test.d));
    let act = match meta.activation {
        ActivationMeta::SmoothRelu { kappa, iota } => Activation::Paired(SmoothRelu::new(kappa, iota)?),
        ActivationMeta::Sphere { phi } => Activation::Sphere(phi),
    };
    let report = harness::diagnose(
        &ens,
        &act,
        &test,
        &test_meta,
        &meta.loss,
        meta.eta,
        meta.beta,
        meta.lambda,
        rho,
        &diag,
        None,
        derive_seed(meta.seed, tag::PROBES),
    )?;
    print(&report)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Deff { config } => deff(&parse_config(&config)?),
        Cmd::Plan { config } => plan_cmd(&parse_config(&config)?),
        Cmd::Train { config, resume } => {
            let plan = parse_config(&config)?;
            let out = harness::run_train_single(&plan, resume.as_deref())?;
            print(&out)
        }
        Cmd::Sweep { kind, config } => {
            let mut plan = parse_config(&config)?;
            plan.kind = match kind {
                SweepKind::PhaseGrid => ExperimentKind::PhaseGrid,
                SweepKind::SampleComplexity => ExperimentKind::SampleComplexity,
                SweepKind::DeffScaling => ExperimentKind::DeffScaling,
            };
            plan.validate()?;
            harness::run_plan(&plan)?;
            eprintln!("wrote {}", plan.output.dir.display());
            Ok(())
        }
        Cmd::Diagnose { checkpoint, data, config } => diagnose(&checkpoint, &data, config.as_ref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
