//! `sgmpc`: calibrate noise proxies, propagate reachable sets, run MPC
//! campaigns and compare tightening methods.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sgmpc_core::Error as CoreError;
use sgmpc_sim::SimError;

/// Exit status for each failure class.
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_DEGENERATE: u8 = 3;
pub const EXIT_CHECK: u8 = 4;
pub const EXIT_INFEASIBLE: u8 = 5;

#[derive(Parser)]
#[command(name = "sgmpc", version, about = "Sub-Gaussian stochastic MPC experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Experiment TOML; the mass-spring-damper defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured number of closed-loop trials.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Output directory; the configured `out` when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Progress messages on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Variance proxy of the samples in a CSV file (one sample per row).
    Calibrate { samples_csv: PathBuf },
    /// Proxy recursion and per-step reachable-set sizes of every method.
    Propagate,
    /// Closed-loop campaigns for the configured methods.
    MpcRun,
    /// Containment study, bound-size plot and closed-loop metrics side by side.
    Compare,
    /// Runs the comparison and exits 4 if an expected inequality fails.
    Check,
}

/// A failure and the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

fn core_code(e: &CoreError) -> u8 {
    match e {
        CoreError::DegenerateSamples(_) | CoreError::NonFinite(_) => EXIT_DEGENERATE,
        CoreError::Infeasible(_) | CoreError::EmptySet(_) => EXIT_INFEASIBLE,
        CoreError::InvalidArgument(_) | CoreError::InvalidProbability(_) | CoreError::DimensionMismatch { .. } => {
            EXIT_INPUT
        }
        _ => 1,
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match &e {
            SimError::Config(_) | SimError::Io(_) => EXIT_INPUT,
            SimError::Empty(_) | SimError::NonFiniteState { .. } => EXIT_DEGENERATE,
            SimError::InitiallyInfeasible(_) => EXIT_INFEASIBLE,
            SimError::Core(c) | SimError::Trial { source: c, .. } => core_code(c),
        };
        Self::new(code, e.to_string())
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Self::new(core_code(&e), e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(EXIT_INPUT, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate { samples_csv } => commands::calibrate(&cli.common, &samples_csv),
        Command::Propagate => commands::propagate(&cli.common),
        Command::MpcRun => commands::mpc_run(&cli.common),
        Command::Compare => commands::compare(&cli.common).map(|_| ()),
        Command::Check => commands::check(&cli.common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
