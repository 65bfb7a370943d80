//! `clad` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clad_core::accounting::Budget;
use clad_core::harness::{self, ExperimentConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "clad", version, about = "Clustered federated intrusion detection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (sweep value, seed, algorithm) combination of a config.
    Run { config: PathBuf },
    /// Write curve and budget-snapshot tables for a results directory.
    Report {
        dir: PathBuf,
        /// Per-client budget such as `13MB` or `20GFLOP`; repeatable.
        #[arg(long = "budget", value_parser = parse_budget)]
        budgets: Vec<Budget>,
    },
    /// Parse a config and check that its data loads and partitions.
    Validate { config: PathBuf },
    /// Materialize synthetic device CSVs.
    Synth { spec: PathBuf, out_dir: PathBuf },
}

fn parse_budget(s: &str) -> std::result::Result<Budget, String> {
    s.parse().map_err(|e: clad_core::Error| e.to_string())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let out = harness::run(&cfg)?;
            println!("{} runs written to {}", out.runs.len(), out.dir.display());
        }
        Command::Report { dir, budgets } => {
            let out = harness::report(&dir, &budgets)?;
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            for row in out
                .budgets
                .iter()
                .filter(|r| r.metric == "cls_f1" || r.metric == "ad_f1")
            {
                let cells: Vec<String> = row
                    .values
                    .iter()
                    .map(|(a, v)| match v {
                        Some(v) => format!("{a}={v:.3}"),
                        None => format!("{a}=-"),
                    })
                    .collect();
                let point = row
                    .sweep_value
                    .map(|v| format!(" {}={v}", row.sweep_axis))
                    .unwrap_or_default();
                let gain = row
                    .gain
                    .map(|g| format!("  gain {:+.1}%", 100.0 * g))
                    .unwrap_or_default();
                println!("@{}{point} {}: {}{gain}", row.budget, row.metric, cells.join(" "));
            }
        }
        Command::Validate { config } => {
            let runs = harness::validate(&config)?;
            println!("{}: ok ({runs} runs)", config.display());
        }
        Command::Synth { spec, out_dir } => {
            let files = harness::synth(&spec, &out_dir)?;
            println!("{} device files written to {}", files.len(), out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
