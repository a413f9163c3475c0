use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use logdesign_core::Regime;

mod commands;

/// Design logging policies for IPW off-policy evaluation and reproduce the
/// simulation figures.
#[derive(Debug, Parser)]
#[command(name = "logdesign", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a logging policy for a regime and write the design report as JSON.
    Design {
        /// Environment JSON (contexts, arrival_probs, actions, mu).
        #[arg(long)]
        env: PathBuf,
        /// One of: uniform, minimax-mu, match-target, neyman, pseudo-target.
        #[arg(long)]
        regime: Regime,
        /// Target policy JSON. Repeat to form an ensemble for pseudo-target.
        #[arg(long)]
        target: Vec<PathBuf>,
        /// Ensemble weights for pseudo-target, one per --target (default: equal).
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        /// Where to write the report.
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form bias, variance and MSE of IPW for a target/logging pair,
    /// with an optional Monte Carlo check.
    Evaluate {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        logging: PathBuf,
        /// Sample size.
        #[arg(long, default_value_t = 1000)]
        n: u64,
        /// Monte Carlo replications (0 skips the simulation).
        #[arg(long, default_value_t = 0)]
        replications: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional JSON output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        parallel: Parallel,
    },
    /// Run an experiment config (JSON) and write its result rows as CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; overrides the config's output_path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        parallel: Parallel,
    },
    /// Run a built-in figure configuration and print its summary.
    ReproduceFigure {
        /// Figure id (see list-figures).
        name: String,
        /// Divide the action and context counts by this factor.
        #[arg(long, default_value_t = 1)]
        scale: usize,
        /// Directory for `<name>.csv`.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        parallel: Parallel,
    },
    /// List the built-in figure ids.
    ListFigures,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Base seed; trial t uses seed + t.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trials.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, Args)]
struct Parallel {
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
