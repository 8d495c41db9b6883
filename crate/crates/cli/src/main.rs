//! `pareto-forge`: solves, preference sweeps, dominance filtering,
//! compression metrics and front reports from JSON configs.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Overrides;

#[derive(Parser)]
#[command(name = "pareto-forge", version, about = "Chebyshev-scalarized multi-objective training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// One scalarized solve for a single preference vector.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Seed for the start point or the training run.
        #[arg(long)]
        seed: Option<u64>,
        /// Chebyshev disturbance term.
        #[arg(long)]
        epsilon: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Solves every preference vector of a plan and archives the front.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Base seed of the plan; per-run seeds derive from it.
        #[arg(long)]
        seed: Option<u64>,
        /// Tolerance of the archive's nondominance filter.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Runs executed at once.
        #[arg(long, env = "PARETO_FORGE_JOBS")]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Keeps the epsilon-nondominated rows of a points CSV (`f0,f1,...`).
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[command(flatten)]
        common: Common,
    },
    /// SR, CR and PS of a checkpoint.
    Metrics {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Front CSV and Markdown summary of an archive.
    Report {
        #[arg(long)]
        archive: PathBuf,
        /// Analytic problem whose known front gives the generational distance.
        #[arg(long)]
        problem: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> error::CliResult<()> {
    match cli.command {
        Command::Solve { config, seed, epsilon, common } => commands::solve_cmd(
            &config,
            &Overrides {
                seed,
                epsilon,
                out_dir: common.out_dir,
                jobs: None,
            },
        ),
        Command::Sweep { config, seed, epsilon, jobs, common } => commands::sweep_cmd(
            &config,
            &Overrides {
                seed,
                epsilon,
                out_dir: common.out_dir,
                jobs,
            },
        ),
        Command::Filter { input, epsilon, common } => commands::filter_cmd(
            &input,
            &Overrides {
                epsilon: Some(epsilon),
                out_dir: common.out_dir,
                ..Default::default()
            },
        ),
        Command::Metrics { checkpoint, common } => commands::metrics_cmd(
            &checkpoint,
            &Overrides {
                out_dir: common.out_dir,
                ..Default::default()
            },
        ),
        Command::Report { archive, problem, common } => commands::report_cmd(
            &archive,
            problem.as_deref(),
            &Overrides {
                out_dir: common.out_dir,
                ..Default::default()
            },
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
