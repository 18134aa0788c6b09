//! Command line driver around the core library: single-path simulation,
//! ensemble studies, and configuration checking, all from one TOML run
//! description.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 failed constraint validation (validate only).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sks_core::diagnostics::validate_constants;
use sks_core::diagnostics::ConstraintVerdict;
use sks_core::harness::{
    run_moments, run_strong_order, run_truncation_events, run_wong_zakai, Experiment, PathProblem,
};
use sks_core::integrator::{integrate, NoHook, ResumePoint};
use sks_core::report;
use sks_core::truncation::run_concatenated;
use sks_core::wiener::{hs_admissibility, AdmissibilityReport, LiveNoise, RegularityTarget};
use sks_core::{CoreError, RunConfig};

#[derive(Parser)]
#[command(
    name = "sks",
    version,
    about = "Simulation lab for a stochastically forced chemotaxis system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one path and write its trajectory, snapshots, and summary
    Simulate(RunArgs),
    /// Ensemble moment study over independent paths
    Ensemble(RunArgs),
    /// Strong-order dt ladder on the scalar reduction
    StrongOrder(RunArgs),
    /// Smoothed-noise arbitration between the correction conventions
    WongZakai(RunArgs),
    /// Stopping-event frequencies across truncation levels
    TruncationEvents(RunArgs),
    /// Check Lyapunov constants and noise admissibility, writing a report
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run description
    #[arg(long)]
    config: PathBuf,
    /// Override ensemble.workers from the config
    #[arg(long)]
    workers: Option<usize>,
    /// Override output.dir from the config
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

/// Every report embeds the parsed config so an output directory is
/// self-describing.
#[derive(Serialize)]
struct WithEcho<'a, T: Serialize> {
    config: &'a toml::Value,
    report: T,
}

struct Loaded {
    cfg: RunConfig,
    echo: toml::Value,
    dir: PathBuf,
}

fn load(args: &RunArgs) -> Result<Loaded, CoreError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        CoreError::Config(format!("cannot read {}: {e}", args.config.display()))
    })?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(CoreError::Config("--workers must be >= 1".into()));
        }
        cfg.ensemble.workers = w;
    }
    let echo: toml::Value = toml::from_str(&text).map_err(|e| CoreError::Config(e.to_string()))?;
    let dir = args.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok(Loaded { cfg, echo, dir })
}

fn exit_for(err: &CoreError) -> u8 {
    match err.root() {
        CoreError::Config(_) => 2,
        CoreError::NonFinite { .. }
        | CoreError::NegativeDensity { .. }
        | CoreError::SolveBreakdown { .. }
        | CoreError::Blowup { .. } => 3,
        _ => 1,
    }
}

fn wrote(path: &Path) {
    println!("wrote {}", path.display());
}

fn simulate(l: &Loaded) -> Result<(), CoreError> {
    let cfg = &l.cfg;
    let state = cfg.initial_state()?;
    let eff = cfg.effective();
    let mut noise = LiveNoise::for_path(
        &cfg.noise1,
        &cfg.noise2,
        cfg.grid,
        cfg.ensemble.base_seed,
        0,
    );
    let (trajectory, events) = match &cfg.truncation {
        Some(trunc) => {
            let run = run_concatenated(
                &state,
                &cfg.model,
                &eff,
                &cfg.lyapunov,
                &cfg.scheme,
                trunc,
                &mut noise,
            )?;
            let t = run.final_trajectory().clone();
            (t, run.events)
        }
        None => {
            let out = integrate(
                &state,
                &cfg.model,
                &eff,
                &cfg.lyapunov,
                &cfg.scheme,
                &mut noise,
                &mut NoHook,
                ResumePoint::default(),
            )?;
            (out.trajectory, Vec::new())
        }
    };
    let traj_path = l.dir.join("trajectory.csv");
    report::trajectory_csv_to_path(&traj_path, &trajectory)?;
    wrote(&traj_path);
    let snap_path = l.dir.join("snapshots.csv");
    report::snapshots_csv_to_path(&snap_path, &trajectory)?;
    wrote(&snap_path);
    if !events.is_empty() {
        let ev_path = l.dir.join("events.csv");
        report::events_csv_to_path(&ev_path, &events)?;
        wrote(&ev_path);
    }
    #[derive(Serialize)]
    struct RunSummary<'a> {
        n_steps: usize,
        final_scalars: &'a sks_core::integrator::ScalarRecord,
        events: &'a [sks_core::truncation::LevelEvent],
    }
    let summary_path = l.dir.join("run.json");
    report::json_to_path(
        &summary_path,
        &WithEcho {
            config: &l.echo,
            report: RunSummary {
                n_steps: trajectory.scalars.len() - 1,
                final_scalars: trajectory.scalars.last().expect("nonempty trajectory"),
                events: &events,
            },
        },
    )?;
    wrote(&summary_path);
    Ok(())
}

fn ensemble(l: &Loaded) -> Result<(), CoreError> {
    let cfg = &l.cfg;
    let state = cfg.initial_state()?;
    let eff = cfg.effective();
    let problem = PathProblem {
        state0: &state,
        model: &cfg.model,
        eff: &eff,
        lyap: &cfg.lyapunov,
        scheme: &cfg.scheme,
        noise1: &cfg.noise1,
        noise2: &cfg.noise2,
    };
    let ens = cfg.ensemble(Experiment::Moments);
    let rep = run_moments(&problem, &ens, cfg.moment_p())?;
    let path = l.dir.join("moments.json");
    report::json_to_path(&path, &WithEcho { config: &l.echo, report: rep })?;
    wrote(&path);
    Ok(())
}

fn strong_order(l: &Loaded) -> Result<(), CoreError> {
    let cfg = &l.cfg;
    let state = cfg.initial_state()?;
    let eff = cfg.effective();
    let problem = PathProblem {
        state0: &state,
        model: &cfg.model,
        eff: &eff,
        lyap: &cfg.lyapunov,
        scheme: &cfg.scheme,
        noise1: &cfg.noise1,
        noise2: &cfg.noise2,
    };
    let ens = cfg.ensemble(Experiment::StrongOrder);
    let rep = run_strong_order(&problem, &ens, &cfg.dt_ladder())?;
    let path = l.dir.join("strong_order.json");
    report::json_to_path(&path, &WithEcho { config: &l.echo, report: rep })?;
    wrote(&path);
    Ok(())
}

fn wong_zakai(l: &Loaded) -> Result<(), CoreError> {
    let cfg = &l.cfg;
    let state = cfg.initial_state()?;
    let eff = cfg.effective();
    let problem = PathProblem {
        state0: &state,
        model: &cfg.model,
        eff: &eff,
        lyap: &cfg.lyapunov,
        scheme: &cfg.scheme,
        noise1: &cfg.noise1,
        noise2: &cfg.noise2,
    };
    let ens = cfg.ensemble(Experiment::WongZakai);
    let rep = run_wong_zakai(&problem, &ens, &cfg.refinement_ladder())?;
    let path = l.dir.join("wong_zakai.json");
    report::json_to_path(&path, &WithEcho { config: &l.echo, report: rep })?;
    wrote(&path);
    Ok(())
}

fn truncation_events(l: &Loaded) -> Result<(), CoreError> {
    let cfg = &l.cfg;
    let trunc = cfg.require_truncation()?;
    let state = cfg.initial_state()?;
    let eff = cfg.effective();
    let problem = PathProblem {
        state0: &state,
        model: &cfg.model,
        eff: &eff,
        lyap: &cfg.lyapunov,
        scheme: &cfg.scheme,
        noise1: &cfg.noise1,
        noise2: &cfg.noise2,
    };
    let ens = cfg.ensemble(Experiment::TruncationEvents);
    let rep = run_truncation_events(&problem, trunc, &ens)?;
    let path = l.dir.join("truncation_events.json");
    report::json_to_path(&path, &WithEcho { config: &l.echo, report: rep })?;
    wrote(&path);
    Ok(())
}

#[derive(Serialize)]
struct NoiseAdmissibility {
    l2: AdmissibilityReport,
    h1: AdmissibilityReport,
}

fn validate(l: &Loaded) -> Result<u8, CoreError> {
    let cfg = &l.cfg;
    let constants = validate_constants(&cfg.lyapunov, &cfg.model);
    #[derive(Serialize)]
    struct ValidationReport {
        constants: sks_core::diagnostics::ConstraintReport,
        noise1: NoiseAdmissibility,
        noise2: NoiseAdmissibility,
    }
    let adm = |spec| NoiseAdmissibility {
        l2: hs_admissibility(spec, RegularityTarget::L2),
        h1: hs_admissibility(spec, RegularityTarget::H1),
    };
    let rep = ValidationReport {
        constants,
        noise1: adm(&cfg.noise1),
        noise2: adm(&cfg.noise2),
    };
    println!(
        "{}",
        report::json_string(&WithEcho { config: &l.echo, report: &rep })?
    );
    Ok(match constants.verdict {
        ConstraintVerdict::Fail => 4,
        _ => 0,
    })
}

fn run(cli: &Cli) -> Result<u8, CoreError> {
    let args = match &cli.command {
        Command::Simulate(a)
        | Command::Ensemble(a)
        | Command::StrongOrder(a)
        | Command::WongZakai(a)
        | Command::TruncationEvents(a)
        | Command::Validate(a) => a,
    };
    let loaded = load(args)?;
    match &cli.command {
        Command::Simulate(_) => simulate(&loaded).map(|()| 0),
        Command::Ensemble(_) => ensemble(&loaded).map(|()| 0),
        Command::StrongOrder(_) => strong_order(&loaded).map(|()| 0),
        Command::WongZakai(_) => wong_zakai(&loaded).map(|()| 0),
        Command::TruncationEvents(_) => truncation_events(&loaded).map(|()| 0),
        Command::Validate(_) => validate(&loaded),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
