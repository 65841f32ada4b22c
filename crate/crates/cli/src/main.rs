//! `flore` — sketch-based stream summaries with generative recovery.
//!
//! One TOML manifest drives every subcommand; `--seed` and
//! `--output-dir` override it without edits. Exit codes: 0 success,
//! 1 configuration error, 2 runtime failure (partial reports are
//! written before exiting).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flore_cli::commands::{self, Context};
use flore_cli::config::{ExperimentConfig, SeedSet};
use flore_cli::CliResult;

#[derive(Parser)]
#[command(
    name = "flore",
    version,
    about = "Sketch-based stream frequency estimation with generative recovery"
)]
struct Cli {
    /// Experiment manifest (TOML).
    #[arg(short, long, global = true, default_value = "experiment.toml")]
    config: PathBuf,

    /// Master seed; derives and overrides every seed role in the manifest.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for reports and artifacts (overrides the manifest).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic workload and save it as a trace file.
    Generate,
    /// Replay the stream into a data plane per budget and persist snapshots.
    Summarize,
    /// Refine count-min estimates with residual-redistribution steps.
    Refine {
        /// Refinement steps (overrides the manifest).
        #[arg(short = 'T', long)]
        steps: Option<usize>,
        /// Keep every step instead of only residual improvements.
        #[arg(long)]
        no_accept: bool,
    },
    /// Train a recovery model per budget and persist checkpoints.
    Train,
    /// Recover estimates from persisted plane and checkpoint pairs.
    Recover,
    /// Run the full estimator-by-budget evaluation sweep.
    Evaluate,
    /// Compare restricted-isometry distances across measurement operators.
    RipBench,
    /// Retrain with objective terms removed and compare accuracy.
    Ablate {
        /// Single variant to run: naive, no-sp, no-ort, no-rec, no-con,
        /// or full (default: all six).
        #[arg(long)]
        variant: Option<String>,
    },
    /// Measure accuracy degradation under workload drift.
    Robustness {
        /// Drift family: temporal, natural, or spatial.
        #[arg(long)]
        scenario: String,
        /// Drift strength; range depends on the scenario.
        #[arg(long)]
        factor: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version print to stdout and succeed; anything
            // else is a malformed invocation, i.e. a configuration error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let mut config = ExperimentConfig::load(&cli.config)?;
    if let Some(master) = cli.seed {
        config.seeds = SeedSet::from_master(master);
    }
    let out_dir = cli
        .output_dir
        .unwrap_or_else(|| config.output.dir.clone());
    let ctx = Context { config, out_dir };
    match cli.command {
        Command::Generate => commands::cmd_generate(&ctx),
        Command::Summarize => commands::cmd_summarize(&ctx),
        Command::Refine { steps, no_accept } => commands::cmd_refine(&ctx, steps, no_accept),
        Command::Train => commands::cmd_train(&ctx),
        Command::Recover => commands::cmd_recover(&ctx),
        Command::Evaluate => commands::cmd_evaluate(&ctx),
        Command::RipBench => commands::cmd_rip_bench(&ctx),
        Command::Ablate { variant } => commands::cmd_ablate(&ctx, variant.as_deref()),
        Command::Robustness { scenario, factor } => {
            commands::cmd_robustness(&ctx, &scenario, factor)
        }
    }
}
