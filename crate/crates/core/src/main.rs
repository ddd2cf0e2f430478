use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use delayfilt::experiments::{execute, Mode, ScenarioConfig};
use delayfilt::Error;

#[derive(Parser)]
#[command(
    name = "delayfilt",
    version,
    about = "Particle filtering with randomly delayed measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV files and manifest.
    Run {
        /// Scenario TOML file.
        #[arg(long)]
        config: PathBuf,
        /// filter, identify-offline, identify-online or sweep.
        #[arg(long, default_value = "filter")]
        mode: Mode,
        /// Master seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides the config, default `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUN: u8 = 3;

fn main() -> ExitCode {
    let Command::Run {
        config,
        mode,
        seed,
        out,
    } = Cli::parse().command;

    let mut cfg = match ScenarioConfig::load(&config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let out_dir = out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    match execute(&cfg, mode, &out_dir) {
        Ok(res) => {
            println!("run {} ({mode}) -> {}", res.run_id, out_dir.display());
            for line in &res.summary {
                println!("  {line}");
            }
            if res.failures > 0 {
                println!("  {} failed runs excluded", res.failures);
            }
            ExitCode::SUCCESS
        }
        Err(Error::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(EXIT_RUN)
        }
    }
}
