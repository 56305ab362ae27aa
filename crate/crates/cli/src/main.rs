//! `mapfl` command-line driver.
//!
//! ```text
//! mapfl run --config exp.toml [--set key=value ...]
//! mapfl compare --config exp.toml --strategies fedavg,map --seeds 1,2,3
//! ```
//!
//! `MAPFL_OUTPUT_DIR`, when set, replaces the configured `output_dir`.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mapfl::experiment::{compare, run, ExperimentConfig};
use mapfl::fl::StrategyKind;

const OUTPUT_ENV: &str = "MAPFL_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "mapfl", version, about = "Federated learning simulator with restricted softmax and inherited private models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML experiment config; every key is optional.
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set strategy=fedrs`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one federation and write CSV logs plus summary.json.
    Run {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Run every strategy/seed pair and write comparison.csv.
    Compare {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        strategies: Vec<StrategyKind>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
    },
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut overrides = args.overrides.clone();
    if let Ok(dir) = std::env::var(OUTPUT_ENV) {
        if !dir.is_empty() {
            overrides.push(format!("output_dir={}", toml_string(&dir)));
        }
    }
    ExperimentConfig::load(&args.config, &overrides)
        .with_context(|| format!("loading {}", args.config.display()))
}

fn toml_string(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { args } => {
            let cfg = load(&args)?;
            let s = run(&cfg).context("run failed")?;
            println!(
                "{} seed {}: agg_acc {:.4}  per_acc {:.4}  ({:.2}s) -> {}",
                s.strategy, s.seed, s.final_agg_acc, s.final_per_acc, s.wall_clock_secs, cfg.output_dir
            );
        }
        Command::Compare { args, strategies, seeds } => {
            let cfg = load(&args)?;
            let rows = compare(&cfg, &strategies, &seeds).context("compare failed")?;
            println!("strategy  n  agg_mean±std        per_mean±std");
            for r in rows {
                println!(
                    "{:<8} {:>2}  {:.4}±{:.4}  {:.4}±{:.4}",
                    r.strategy, r.n_seeds, r.agg_mean, r.agg_std, r.per_mean, r.per_std
                );
            }
        }
    }
    Ok(())
}
