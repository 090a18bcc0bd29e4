mod config;
mod experiments;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::ExperimentConfig;
use experiments::{Outcome, RunError};

#[derive(Parser)]
#[command(name = "ym2", version, about = "Lattice Yang-Mills experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for Monte Carlo loops; results do not depend on it.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run { config, threads, out_dir } = cli.command;
    let override_seed = std::env::var("YM2_SEED_OVERRIDE").ok();
    let cfg = match ExperimentConfig::load(&config, override_seed.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if threads == 0 {
        eprintln!("config error: --threads must be positive");
        return ExitCode::from(EXIT_CONFIG);
    }

    let start = Instant::now();
    let outcome = match experiments::run(&cfg, threads) {
        Ok(o) => o,
        Err(RunError::Config(m)) => {
            eprintln!("config error: {m}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(RunError::Compute(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(EXIT_CHECK_FAILED);
        }
    };
    let wall = start.elapsed().as_secs_f64();

    if let Err(e) = write_outputs(&cfg, &outcome, &out_dir, threads, wall) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CHECK_FAILED);
    }
    let failed: Vec<&str> = outcome.checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("failed checks: {}", failed.join(", "));
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}

fn write_outputs(cfg: &ExperimentConfig, out: &Outcome, dir: &Path, threads: usize, wall: f64) -> Result<(), Box<dyn std::error::Error>> {
    std::fs::create_dir_all(dir)?;
    let stem = cfg.stem();
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
    w.write_record(&out.header)?;
    for r in &out.rows {
        w.write_record(r)?;
    }
    w.flush()?;

    let checks: serde_json::Map<String, serde_json::Value> = out.checks.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    let summary = json!({
        "kind": cfg.kind,
        "config": cfg,
        "seed": cfg.seed,
        "threads": threads,
        "wall_seconds": wall,
        "checks": checks,
        "passed": out.checks.iter().all(|c| c.1),
        "payload": out.payload,
    });
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}
