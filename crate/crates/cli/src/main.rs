use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use noma_mimo::experiment::{run_experiment, write_csv, ConfigFile, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "sim", version, about = "Code-domain NOMA Massive MIMO uplink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sum SE of the two-user setup against the interferer azimuth.
    AngleSweep(RunArgs),
    /// Favorable-propagation variance against the interferer azimuth.
    VarianceSweep(RunArgs),
    /// Sum SE of clustered multi-cell drops against the number of UEs per cell.
    ClusterSweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Fading realizations per drop.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Destination CSV file.
    #[arg(long)]
    output: PathBuf,
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<()> {
    let mut file = ConfigFile::load(&args.config)?;
    if args.seed.is_some() {
        file.seed = args.seed;
    }
    if args.trials.is_some() {
        file.trials = args.trials;
    }
    if args.workers.is_some() {
        file.workers = args.workers;
    }
    let config = ExperimentConfig::resolve(kind, &file).with_context(|| format!("invalid configuration {}", args.config.display()))?;
    eprintln!(
        "{kind}: model {}, M = {}, L = {}, {} trials x {} drops, seed {}, {} workers",
        config.model.as_str(),
        config.antennas,
        config.cells,
        config.trials,
        config.drops,
        config.seed,
        config.workers
    );
    let start = Instant::now();
    let rows = run_experiment(&config, &mut |msg| eprintln!("[{:>8.1}s] {msg}", start.elapsed().as_secs_f64()))?;
    write_csv(&rows, &args.output)?;
    eprintln!("wrote {} rows to {} in {:.1}s", rows.len(), args.output.display(), start.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::AngleSweep(a) => (ExperimentKind::AngleSweep, a),
        Command::VarianceSweep(a) => (ExperimentKind::VarianceSweep, a),
        Command::ClusterSweep(a) => (ExperimentKind::ClusterSweep, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
