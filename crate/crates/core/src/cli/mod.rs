//! Batch front end: problem files, command dispatch and run directories.
//!
//! ```text
//! hierctrl <command> --problem FILE [--out DIR] [--epsilon-ladder LIST]
//!                    [--samples N] [--jobs K] [--seed N]
//! ```

mod commands;
mod config;
pub mod expr;
mod output;

pub use commands::{build_problem, dispatch, epsilon_tag, run_file, Command, HumReport, RunOptions};
pub use config::{
    parse_problem_bytes, parse_problem_str, read_problem, AnalysisSpec, AutoKeyword, AutoOr, CoefficientsSpec,
    ControlCommandSpec, ControlsSpec, FunctionalsSpec, GridSpec, PairData, ProblemFile, RegionSpec, RegionsSpec,
    Resolved, Scalar, SolverSpec, SweepSpec, TargetsSpec, WeightsSpec, SWEEP_PARAMETERS,
};
pub use expr::Expr;
pub use output::{config_hash, Column, FileSchema, RunDir, RunManifest, RunStatus, Versions, MANIFEST, SCHEMA};

use clap::Parser;
use std::path::PathBuf;

/// Stackelberg-Nash hierarchic control experiments.
#[derive(Debug, Parser)]
#[command(name = "hierctrl", version)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Problem file (JSON).
    #[arg(long)]
    pub problem: PathBuf,
    /// Output directory; defaults to `runs/<command>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated penalties for `control`, e.g. `1e-1,1e-3,1e-5`.
    #[arg(long, value_delimiter = ',')]
    pub epsilon_ladder: Option<Vec<f64>>,
    /// Random samples per sampled check.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Worker threads (sweep cells, ladder entries and sampled checks).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Master seed; overrides the problem file.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Cli {
    pub fn options(&self) -> RunOptions {
        RunOptions {
            out: self
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("runs").join(self.command.name())),
            epsilon_ladder: self.epsilon_ladder.clone(),
            samples: self.samples,
            jobs: self.jobs,
            seed: self.seed,
        }
    }
}

/// Parse arguments, run, and return the process exit code
/// (0 on success, 1 when the run failed; clap exits with 2 on usage errors).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::parse_from(args);
    let opts = cli.options();
    let manifest = run_file(cli.command, &cli.problem, &opts);
    let path = opts.out.join(MANIFEST);
    match manifest.status {
        RunStatus::Ok => {
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} finished in {:.2}s; manifest at {}",
                manifest.command,
                manifest.wall_time_seconds,
                path.display()
            );
            0
        }
        RunStatus::Error => {
            eprintln!(
                "error: {} failed: {}; manifest at {}",
                manifest.command,
                manifest.error.as_deref().unwrap_or("unknown error"),
                path.display()
            );
            1
        }
    }
}
