//! Command-line front end. `main` returns the process exit code:
//! 0 success, 1 failed check, 2 usage or configuration error, 3 solver failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::{config_help, parse_config, Regime, RunConfig};
use crate::diagnostics::{check_extinction, CheckResult};
use crate::error::{Error, Result};
use crate::evolution::{evolve, EvolveOptions, Trajectory};
use crate::field::Norm;
use crate::io::{write_field_csv, write_history_csv, write_json, write_weights_csv};
use crate::kernel::build_weights;
use crate::profiles::{compute_eigenpair, compute_giant, normalize_profile};
use crate::suite::{run_suite, Report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fracplap", version, about = "Dirichlet problem for the fractional p-Laplacian on an interval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the `out` key.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed of the randomized checks; overrides the `seed` key.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Print nothing but errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Evolve the configured data and write the trajectory.
    Run,
    /// Compute the separable profile F (needs p > 2).
    Giant,
    /// Compute the first eigenpair.
    Eigen,
    /// Run the diagnostic suite and write report.json.
    Verify,
    /// Evolve until extinction and fit the vanishing rate (needs 1 < p < 2).
    Extinct,
    /// Write the kernel weights W and tail T.
    DumpWeights,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Giant => "giant",
            Command::Eigen => "eigen",
            Command::Verify => "verify",
            Command::Extinct => "extinct",
            Command::DumpWeights => "dump-weights",
        }
    }

    fn regime(self) -> Regime {
        match self {
            Command::Giant => Regime::Slow,
            Command::Extinct => Regime::Fast,
            _ => Regime::Any,
        }
    }
}

/// File contents, then `--set` overrides in order, then the dedicated flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config { origin: path.display().to_string(), msg: e.to_string() })?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    for item in &cli.set {
        let Some((key, value)) = item.split_once('=') else {
            return Err(Error::Config { origin: format!("--set {item}"), msg: "expected KEY=VALUE".into() });
        };
        cfg.set(key.trim(), value.trim(), &format!("--set {item}"))?;
    }
    if let Some(out) = &cli.out {
        cfg.set("out", &out.to_string_lossy(), "--out")?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string(), "--seed")?;
    }
    cfg.validate(cli.command.regime())?;
    Ok(cfg)
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        println!("{}", msg.as_ref());
    }
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    command: &'a str,
    config: &'a RunConfig,
    #[serde(flatten)]
    result: T,
}

fn summary<T: Serialize>(dir: &Path, file: &str, command: Command, cfg: &RunConfig, result: T) -> Result<()> {
    write_json(&dir.join(file), &Summary { command: command.name(), config: cfg, result })
}

/// Indices of `count` snapshots spread evenly over the steps, first and last included.
fn snapshot_indices(len: usize, count: usize) -> Vec<usize> {
    if count == 0 || len == 0 {
        return Vec::new();
    }
    if count == 1 {
        return vec![len - 1];
    }
    let mut idx: Vec<usize> = (0..count).map(|k| (k * (len - 1) + (count - 1) / 2) / (count - 1)).collect();
    idx.dedup();
    idx
}

fn write_trajectory(dir: &Path, traj: &Trajectory, snapshots: usize) -> Result<()> {
    write_history_csv(&dir.join("history.csv"), traj)?;
    for k in snapshot_indices(traj.len(), snapshots) {
        write_field_csv(&dir.join(format!("snapshot_{k:06}.csv")), traj.state(k), traj.grid())?;
    }
    write_field_csv(&dir.join("final.csv"), traj.last_state(), traj.grid())
}

fn evolve_outcome(r: Result<Trajectory>, dir: &Path, snapshots: usize) -> Result<Trajectory> {
    match r {
        Ok(t) => Ok(t),
        Err(Error::StepFailed { step, partial, source }) => {
            // keep what was computed before the failure
            write_trajectory(dir, &partial, snapshots)?;
            Err(Error::StepFailed { step, partial, source })
        }
        Err(e) => Err(e),
    }
}

/// Runs one subcommand on a validated configuration; `Ok(false)` means a gating check failed.
pub fn run_command(command: Command, cfg: &RunConfig, quiet: bool) -> Result<bool> {
    let dir = cfg.out.as_path();
    fs::create_dir_all(dir)?;
    let prm = cfg.params()?;
    let grid = cfg.grid()?;
    let kw = build_weights(&grid, &prm);
    let opts = EvolveOptions { tol: cfg.tol, max_iter: cfg.max_iter, stop_below: None };
    match command {
        Command::Run => {
            let u0 = cfg.initial_data(&kw)?;
            let traj = evolve_outcome(evolve(&u0, &cfg.schedule(), &kw, &opts), dir, cfg.snapshots)?;
            write_trajectory(dir, &traj, cfg.snapshots)?;
            let last = traj.last_state();
            let prox_iterations: usize = traj.records().iter().filter_map(|r| r.prox.as_ref()).map(|r| r.iterations).sum();
            summary(
                dir,
                "summary.json",
                command,
                cfg,
                json!({
                    "steps": traj.len() - 1,
                    "t_final": traj.time(traj.len() - 1),
                    "mass_final": last.mass(),
                    "linf_final": last.norm(Norm::LInf),
                    "l2_final": last.norm(Norm::L2),
                    "prox_iterations": prox_iterations,
                    "records": traj.records(),
                }),
            )?;
            say(quiet, format!("run: {} steps to t = {:.6e}, |u|_inf = {:.6e}", traj.len() - 1, traj.time(traj.len() - 1), last.norm(Norm::LInf)));
            Ok(true)
        }
        Command::Giant => {
            let gp = compute_giant(&kw, cfg.profile_tol, cfg.profile_max_steps)?;
            write_field_csv(&dir.join("profile.csv"), &gp.profile, &grid)?;
            write_field_csv(&dir.join("profile_normalized.csv"), &normalize_profile(&gp.profile, &prm)?, &grid)?;
            summary(
                dir,
                "giant.json",
                command,
                cfg,
                json!({ "mu": gp.mu, "residual": gp.residual, "iterations": gp.iterations, "f_max": gp.profile.max() }),
            )?;
            say(quiet, format!("giant: max F = {:.10}, residual {:.3e} after {} steps", gp.profile.max(), gp.residual, gp.iterations));
            Ok(true)
        }
        Command::Eigen => {
            let ep = compute_eigenpair(&kw, cfg.eigen_tol, cfg.eigen_max_iter)?;
            write_field_csv(&dir.join("eigenfunction.csv"), &ep.phi1, &grid)?;
            summary(
                dir,
                "eigen.json",
                command,
                cfg,
                json!({ "lambda1": ep.lambda1, "residual": ep.residual, "tolerance": ep.tolerance, "iterations": ep.iterations }),
            )?;
            say(quiet, format!("eigen: lambda1 = {:.12}, residual {:.3e}", ep.lambda1, ep.residual));
            Ok(true)
        }
        Command::Verify => {
            let report = Report::new(command.name(), cfg, run_suite(cfg)?);
            write_json(&dir.join("report.json"), &report)?;
            say(quiet, report.table().trim_end());
            Ok(report.passed)
        }
        Command::Extinct => {
            let opts = EvolveOptions { stop_below: Some(1e-2 * cfg.extinction_threshold), ..opts };
            let u0 = cfg.initial_data(&kw)?;
            let traj = evolve_outcome(evolve(&u0, &cfg.schedule(), &kw, &opts), dir, cfg.snapshots)?;
            write_trajectory(dir, &traj, cfg.snapshots)?;
            let check: CheckResult = check_extinction(&traj, &prm, cfg.extinction_threshold)?;
            let passed = !check.gates();
            say(quiet, format!("extinct: {}", check.detail));
            summary(dir, "extinction.json", command, cfg, json!({ "check": check }))?;
            Ok(passed)
        }
        Command::DumpWeights => {
            write_weights_csv(dir, &kw)?;
            say(quiet, format!("dump-weights: {} x {} weights written to {}", kw.n(), kw.n(), dir.display()));
            Ok(true)
        }
    }
}

/// Sizes the global thread pool from `FRACPLAP_THREADS` (unset or 0: one per core).
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("FRACPLAP_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config { origin: "FRACPLAP_THREADS".into(), msg: format!("cannot parse {raw:?}") })?;
    // a second initialization (tests, embedding) keeps the existing pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_solver_failure() {
        EXIT_SOLVER
    } else {
        EXIT_USAGE
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().after_long_help(config_help()).try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    let outcome = init_threads()
        .and_then(|()| resolve_config(&cli))
        .and_then(|cfg| run_command(cli.command, &cfg, cli.quiet));
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            eprintln!("fracplap {}: a gating check failed", cli.command.name());
            EXIT_CHECK_FAILED
        }
        Err(e) => {
            eprintln!("fracplap {}: {e}", cli.command.name());
            exit_code(&e)
        }
    }
}
