//! `mrp`: simulate marked renewal trajectories, estimate their rates and
//! run the replicated reliability experiment.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};

use mrp_core::experiment::{
    estimate_from_file, run_experiment, simulate_to_files, write_experiment, ExperimentConfig,
};
use mrp_core::simulate::Seed;

#[derive(Debug, Parser)]
#[command(name = "mrp", version, about)]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replicates.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write one trajectory CSV per (sample size, replicate).
    Simulate,
    /// Estimate the cumulative and jump rates of the centre cell from a trajectory CSV.
    Estimate {
        trajectory: PathBuf,
    },
    /// Run every replicate and write report.json plus ISE tables.
    Experiment,
    /// Print the default configuration.
    PrintDefaultConfig,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = Seed(seed);
    }
    if let Some(dir) = &cli.output {
        config.output_dir = dir.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    if let Command::PrintDefaultConfig = cli.command {
        print!("{}", ExperimentConfig::default().to_toml_string());
        return Ok(());
    }
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Simulate => {
            let dir = config.output_dir.join("trajectories");
            let files = simulate_to_files(&config, &dir, cli.jobs)?;
            info!("wrote {} trajectories to {}", files.len(), dir.display());
        }
        Command::Estimate { trajectory } => {
            let out = estimate_from_file(&config, trajectory, &config.output_dir)
                .with_context(|| format!("estimating from {}", trajectory.display()))?;
            for w in &out.warnings {
                warn!("{w}");
            }
            info!(
                "wrote {} and {}",
                out.cumulative_csv.display(),
                out.rate_csv.display()
            );
        }
        Command::Experiment => {
            let outcome = run_experiment(&config, cli.jobs)?;
            let files = write_experiment(&outcome, &config.output_dir)?;
            for s in &outcome.report.summaries {
                println!(
                    "n={:<5} {:<11} min {:.5} q1 {:.5} median {:.5} q3 {:.5} max {:.5}",
                    s.n, s.metric, s.min, s.q1, s.median, s.q3, s.max
                );
            }
            println!(
                "mean visit fraction {:.4}; {} failed replicates",
                outcome.report.visit_fraction_mean,
                outcome.report.failures.len()
            );
            info!("wrote {} files to {}", files.len(), config.output_dir.display());
        }
        Command::PrintDefaultConfig => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
