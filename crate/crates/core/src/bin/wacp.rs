use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wacp::data::{gen_synthetic, gen_synthetic_with_noise};
use wacp::experiment::{run_experiment, summarize, ExperimentConfig};

#[derive(Parser)]
#[command(version, about = "Weighted aggregation of conformal prediction sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-trial experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write synthetic regression data as CSV (label column `y`).
    GenSynthetic {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        noise_sd: Option<f64>,
    },
    /// Recompute summary.json from a run's trials.csv.
    Summarize {
        #[arg(long = "in")]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> wacp::Result<ExitCode> {
    match command {
        Command::Run {
            config,
            seed,
            trials,
            out,
        } => {
            let mut config = ExperimentConfig::from_file(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(trials) = trials {
                config.trials = trials;
            }
            if let Some(out) = out {
                config.output_dir = out;
            }
            config.validate()?;
            let report = run_experiment(&config)?;
            println!(
                "{} rows written to {} in {:.1}s",
                report.rows.len(),
                report.output_dir.display(),
                report.manifest.elapsed_seconds
            );
            for f in &report.manifest.failed_trials {
                eprintln!("trial {} (seed {}) failed: {}", f.trial, f.seed, f.error);
            }
            Ok(if report.succeeded() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::GenSynthetic {
            n,
            seed,
            out,
            noise_sd,
        } => {
            let data = match noise_sd {
                Some(sd) => gen_synthetic_with_noise(n, seed, sd),
                None => gen_synthetic(n, seed),
            };
            data.write_csv(&out, "y")?;
            println!("{n} rows written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Summarize { dir } => {
            let summary = summarize(&dir)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
