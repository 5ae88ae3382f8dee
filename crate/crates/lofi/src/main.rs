use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use lofi::config::ExperimentConfig;
use lofi::runner::{self, RunReport, WORKERS_ENV};
use lofi_core::learner::Method;

#[derive(Parser)]
#[command(name = "lofi", version, about = "Online Bayesian learning with low-rank plus diagonal posteriors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the prequential experiment described by a config file.
    Run { config: PathBuf },
    /// Random-search the dynamics and noise hyperparameters.
    Tune { config: PathBuf },
    /// Run the synthetic contextual bandit.
    Bandit { config: PathBuf },
    /// Check a config file and report every problem.
    Validate { config: PathBuf },
    /// List the available method tags.
    ListMethods,
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig::from_file(path)?)
}

fn print_report(report: &RunReport) {
    if let Some(h) = &report.tuned {
        println!("tuned: eta0={} q={} gamma={} obs_noise={}", h.initial_precision, h.process_noise, h.gamma, h.obs_noise);
    }
    for r in &report.summary {
        println!("{:<24} {:<18} {:.6} ± {:.6} ({} seeds)", r.method, r.metric, r.mean, r.stderr, r.seeds);
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let report = runner::run_experiment(&load(&config)?)?;
            print_report(&report);
            runner::ensure_complete(&report)
        }
        Command::Bandit { config } => {
            let report = runner::run_bandit_experiment(&load(&config)?)?;
            print_report(&report);
            runner::ensure_complete(&report)
        }
        Command::Tune { config } => {
            let (result, path) = runner::tune(&load(&config)?)?;
            let h = result.best;
            println!(
                "best trial {}: eta0={} q={} gamma={} obs_noise={}",
                result.best_index, h.initial_precision, h.process_noise, h.gamma, h.obs_noise
            );
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Validate { config } => {
            load(&config)?;
            println!("{}: ok", config.display());
            Ok(())
        }
        Command::ListMethods => {
            for tag in Method::TAGS {
                println!("{tag}");
            }
            println!("(worker threads: set {WORKERS_ENV})");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
