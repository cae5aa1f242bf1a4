//! Command-line entry point for the selection engine.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use decern_core::cli::{self, GenerateArgs, ReportArgs, RunArgs};

#[derive(Parser)]
#[command(
    name = "decern",
    version,
    about = "Active-learning selection benchmark over precomputed embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic embedding dataset (train + test files + sidecar)
    Generate {
        /// Number of classes
        #[arg(long)]
        classes: usize,
        /// Samples per class before the 70/30 split
        #[arg(long = "per-class")]
        per_class: usize,
        /// Embedding dimension
        #[arg(long)]
        dim: usize,
        /// Generation seed
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Distance scale of the class centers
        #[arg(long, default_value_t = 10.0)]
        spread: f64,
        /// Standard deviation of the per-sample noise
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        /// Fraction by which the center spread shrinks, in [0, 1)
        #[arg(long, default_value_t = 0.0)]
        overlap: f64,
        /// Output path for the train pool (.dcrn)
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one strategy from a config file
    Run {
        /// Config file (flat `key = value` lines)
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, repeatable: --set key=value
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Cap on parallel seed/strategy jobs
        #[arg(long)]
        jobs: Option<usize>,
        /// Keep measured wall-clock values in report.json/curves.csv
        #[arg(long)]
        timing: bool,
    },
    /// Run every strategy in the config's `strategies` list
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        timing: bool,
    },
    /// Re-emit curves.csv and summary tables from a report.json
    Report {
        /// Path to report.json
        #[arg(long)]
        report: PathBuf,
        /// Output directory (defaults to the report's directory)
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            classes,
            per_class,
            dim,
            seed,
            spread,
            noise,
            overlap,
            out,
        } => cli::cmd_generate(&GenerateArgs {
            classes,
            per_class,
            dim,
            seed,
            spread,
            noise,
            overlap,
            out,
        }),
        Command::Run {
            config,
            overrides,
            jobs,
            timing,
        } => cli::cmd_run(&RunArgs {
            config,
            overrides,
            jobs,
            timing,
        }),
        Command::Sweep {
            config,
            overrides,
            jobs,
            timing,
        } => cli::cmd_sweep(&RunArgs {
            config,
            overrides,
            jobs,
            timing,
        }),
        Command::Report { report, out_dir } => cli::cmd_report(&ReportArgs { report, out_dir }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
