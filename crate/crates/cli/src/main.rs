//! Command-line laboratory for iterated random Lipschitz mappings.
//!
//! Subcommands run the pipeline up to a stage (earlier stages a later one
//! needs always run): `diagnose`, `simulate`, `variance`, `spectral`,
//! `clt`, and `run` for the full pipeline. Exit codes: 0 success, 2 config
//! error, 3 hypothesis failure, 4 numerical inconsistency.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iterlip::pipeline::{self, Stage};

const THREADS_ENV: &str = "ITERLIP_THREADS";

#[derive(Parser)]
#[command(
    name = "iterlip",
    about = "Simulation and spectral laboratory for iterated random Lipschitz mappings",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: ./out/<subcommand>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: ITERLIP_THREADS or all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Override the dominant path counts (decay, batch variance, CLT).
    #[arg(long)]
    paths: Option<usize>,
    /// Override the ergodicity-decay horizon.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the contraction-in-mean hypotheses.
    Diagnose(RunArgs),
    /// Estimate the invariant measure and the ergodicity decay.
    Simulate(RunArgs),
    /// Estimate sigma^2 by the batch and Poisson routes.
    Variance(RunArgs),
    /// Discretize the Fourier operators and scan the spectrum.
    Spectral(RunArgs),
    /// Run the CLT and local-CLT harnesses.
    Clt(RunArgs),
    /// Full pipeline: diagnose, simulate, variance, spectral, clt.
    Run(RunArgs),
    /// Print an example configuration to stdout.
    ExampleConfig,
}

fn execute(args: &RunArgs, stage: Stage) -> ExitCode {
    let threads = args.threads.or_else(|| {
        std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok())
    });
    iterlip::par::configure_threads(threads);

    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut config = match iterlip::config::Config::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(paths) = args.paths {
        config.simulation.decay_paths = paths;
        config.variance.batch_paths = paths;
        config.harness.clt_paths = paths;
        config.harness.local_paths = paths;
    }
    if let Some(horizon) = args.horizon {
        config.simulation.horizon = horizon;
    }

    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| pipeline::default_out_dir(&PathBuf::from("out"), stage));

    match pipeline::run_experiment(&config, &out_dir, stage) {
        Ok(summary) => {
            println!(
                "ok: stages [{}] written to {}",
                summary.stages_run.join(", "),
                out_dir.display()
            );
            if let Some(s) = summary.sigma2_batch {
                println!("sigma^2 (batch)    = {s}");
            }
            if let Some(s) = summary.sigma2_poisson {
                println!("sigma^2 (poisson)  = {s}");
            }
            if let Some(s) = summary.sigma2_spectral {
                println!("sigma^2 (spectral) = {s}");
            }
            for note in &summary.notes {
                println!("note: {note}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("reports (including summary.json) were written to {}", out_dir.display());
            ExitCode::from(pipeline::exit_code_for(&e) as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Diagnose(args) => execute(args, Stage::Diagnose),
        Command::Simulate(args) => execute(args, Stage::Simulate),
        Command::Variance(args) => execute(args, Stage::Variance),
        Command::Spectral(args) => execute(args, Stage::Spectral),
        Command::Clt(args) => execute(args, Stage::Clt),
        Command::Run(args) => execute(args, Stage::Full),
        Command::ExampleConfig => {
            let cfg = iterlip::config::Config::example();
            println!("{}", serde_json::to_string_pretty(&cfg).expect("serializes"));
            ExitCode::SUCCESS
        }
    }
}
