use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use sabre_core::harness::{
    run_fit, run_mc, summary_path, ExperimentConfig, FitConfig, HarnessError,
};

#[derive(Parser)]
#[command(
    name = "sabre",
    version,
    about = "Bias-corrected partially linear GLM fitting"
)]
struct Cli {
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's worker thread count (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit sMLE and SABRE to a CSV dataset and print a JSON report.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo study, writing records to CSV and a JSON summary
    /// beside it.
    Mc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_config(path: &PathBuf) -> Result<String, HarnessError> {
    fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Fit { data, config, out } => {
            let mut cfg = FitConfig::from_json(&read_config(&config)?)?;
            if let Some(seed) = cli.seed {
                cfg.master_seed = seed;
            }
            if let Some(threads) = cli.threads {
                cfg.threads = threads;
            }
            let report = run_fit(&data, &cfg)?;
            let text = serde_json::to_string_pretty(&report)?;
            match out {
                Some(path) => fs::write(path, text + "\n")?,
                None => println!("{text}"),
            }
        }
        Command::Mc { config, out } => {
            let mut cfg = ExperimentConfig::from_json(&read_config(&config)?)?;
            if let Some(seed) = cli.seed {
                cfg.master_seed = seed;
            }
            if let Some(threads) = cli.threads {
                cfg.threads = threads;
            }
            let output = run_mc(&cfg, &out)?;
            info!(
                "{} records written to {}, summary in {}",
                output.records.len(),
                out.display(),
                summary_path(&out).display()
            );
            for f in &output.summary.failures {
                log::warn!(
                    "{:?} {} at grid value {}: {} failures",
                    f.estimator,
                    f.kind,
                    f.grid_value,
                    f.count
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
