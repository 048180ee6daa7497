//! Command-line front end for the simulator: single scenarios, parameter
//! sweeps, plot-ready figure data, and a built-in self check.

mod figure;
mod run;
mod settings;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ponsim", version, about = "Multi-tenant PON upstream scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario or a sweep and write a result CSV.
    Run(RunArgs),
    /// Reduce a sweep CSV to per-tuning plot series.
    Figure(FigureArgs),
    /// Check the scheduler against its reference oracle and invariants.
    Verify(VerifyArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Configuration file, flat `key = value` lines under `[sections]`;
    /// command-line flags override file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Channel layout as NxR with R in Gbit/s, e.g. 8x25.
    #[arg(long, conflicts_with = "sweep")]
    pub channels: Option<String>,
    /// Transceiver tuning time in nanoseconds.
    #[arg(long, conflicts_with = "sweep")]
    pub tuning: Option<i64>,
    /// Offered load in percent of total upstream capacity.
    #[arg(long, conflicts_with = "sweep")]
    pub load: Option<f64>,
    /// Share of the load carried by SLA flows, in percent.
    #[arg(long, conflicts_with = "sweep")]
    pub sla_share: Option<f64>,
    /// Number of frames to simulate.
    #[arg(long)]
    pub frames: Option<u32>,
    /// Seed of a single run. A run with the seed and coordinates of a sweep
    /// cell reproduces that cell's row exactly.
    #[arg(long, conflicts_with_all = ["sweep", "seeds"])]
    pub seed: Option<u64>,
    /// Sweep the built-in evaluation grid instead of one scenario.
    #[arg(long, value_enum)]
    pub sweep: Option<SweepKind>,
    /// Sweep seeds, an inclusive range like 1..5 or a comma list.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Worker threads for sweep execution; the output is identical for any
    /// value.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output CSV path; stdout when omitted. Relative paths resolve under
    /// PONSIM_OUT_DIR when that variable is set.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Built-in sweep grids.
#[derive(Clone, Copy, ValueEnum)]
pub enum SweepKind {
    /// Three channel layouts, four tuning times, three loads, ten SLA
    /// shares; 360 scenarios per seed.
    Full,
}

#[derive(Args)]
pub struct FigureArgs {
    /// Sweep CSV to reduce.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Tuning time to select, in nanoseconds.
    #[arg(long)]
    pub tuning: i64,
    /// Output directory; defaults to PONSIM_OUT_DIR, then the working
    /// directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Randomized oracle instances to check.
    #[arg(long, default_value_t = 100)]
    pub instances: u64,
    /// Seed of the randomized checks.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Corrupt one grant before the invariant check; the check must then
    /// fail. Exists to prove the checker is wired in.
    #[arg(long)]
    pub inject_overlap: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run::cmd_run(&args),
        Command::Figure(args) => figure::cmd_figure(&args),
        Command::Verify(args) => verify::cmd_verify(&args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
