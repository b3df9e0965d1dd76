//! Command-line runner: binds each experiment to reproducible CSV/JSON
//! outputs with a fixed exit-code contract.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Args, Parser, Subcommand};

use crate::commands::{Outcome, RunOptions};
use crate::config::ExperimentConfig;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "MINEA_ERGO_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;
/// Phase scan stopped by Ctrl-C after flushing completed cells.
pub const EXIT_INTERRUPTED: i32 = 130;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    BlowUp(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::BlowUp(_) => EXIT_BLOW_UP,
            CliError::Verification(_) => EXIT_VERIFICATION,
            // unwritable output paths are a configuration problem
            CliError::Io(_) => EXIT_CONFIG,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "minea-ergo",
    version,
    about = "Invariant-measure experiments for the Minea system and 2D stochastic Navier-Stokes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One trajectory to `{out}.trajectory.csv`.
    Simulate(CommonArgs),
    /// (kappa, sigma) grid to `{out}.phase_scan.csv`.
    PhaseScan(CommonArgs),
    /// Stationary branches to `{out}.stationary_points.json`.
    StationaryPoints(CommonArgs),
    /// Two-basin ensemble comparison to `{out}.dual_basin.json` and sample files.
    DualBasin(CommonArgs),
    /// Galerkin Navier-Stokes checks to `{out}.nse_verify.json`.
    NseVerify(CommonArgs),
    /// OU stationary-law check to `{out}.ou_check.json` and `{out}.ou_samples.csv`.
    OuCheck(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `sim.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path prefix; overrides `output` in the config.
    #[arg(long)]
    pub out: Option<String>,
    /// dual-basin: exit 4 unless the two laws are separated.
    #[arg(long)]
    pub expect_separation: bool,
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a)
            | Command::PhaseScan(a)
            | Command::StationaryPoints(a)
            | Command::DualBasin(a)
            | Command::NseVerify(a)
            | Command::OuCheck(a) => a,
        }
    }
}

/// Raised by the Ctrl-C handler; the phase scan stops scheduling new cells.
pub static CANCEL: AtomicBool = AtomicBool::new(false);
/// Set while a phase scan runs, so that Ctrl-C elsewhere exits immediately.
pub static SCAN_ACTIVE: AtomicBool = AtomicBool::new(false);

/// Size the global worker pool from [`WORKERS_ENV`].
pub fn configure_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got '{raw}'")))?;
    // a pool that is already built (repeated in-process runs) is kept
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(command: &Command) -> Result<Outcome, CliError> {
    let args = command.args();
    let cfg = ExperimentConfig::load(&args.config)?;
    let opts = RunOptions {
        seed: args.seed.unwrap_or(cfg.sim.seed),
        prefix: args
            .out
            .clone()
            .or_else(|| cfg.output.clone())
            .unwrap_or_else(|| "minea-ergo".to_owned()),
        expect_separation: args.expect_separation,
    };
    match command {
        Command::Simulate(_) => commands::simulate(&cfg, &opts),
        Command::PhaseScan(_) => {
            SCAN_ACTIVE.store(true, Ordering::SeqCst);
            let r = commands::phase_scan(&cfg, &opts, &CANCEL);
            SCAN_ACTIVE.store(false, Ordering::SeqCst);
            r
        }
        Command::StationaryPoints(_) => commands::stationary_points(&cfg, &opts),
        Command::DualBasin(_) => commands::dual_basin(&cfg, &opts),
        Command::NseVerify(_) => commands::nse_verify(&cfg, &opts),
        Command::OuCheck(_) => commands::ou_check(&cfg, &opts),
    }
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: &Cli) -> i32 {
    if let Err(e) = configure_workers() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match execute(&cli.command) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.interrupted {
                eprintln!("interrupted: completed cells were written");
                EXIT_INTERRUPTED
            } else if let Some(msg) = outcome.failure {
                let e = CliError::Verification(msg);
                eprintln!("error: {e}");
                e.exit_code()
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
