//! Config-driven experiment runner: builds data, partition and model from an
//! [`ExperimentConfig`], runs the federation and writes CSV logs plus a JSON
//! summary.

mod config;

pub use config::{DatasetKind, ExperimentConfig, PartitionKind};

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_blobs, load_csv, partition_dirichlet, partition_label_skew, Dataset, PartitionSpec};
use crate::fl::{run_federation, setup, RunLog, StrategyKind};
use crate::metrics::{write_clients_csv, write_distances_csv, write_metrics_csv, write_proxies_csv};
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CLIENTS_FILE: &str = "clients.csv";
pub const PROXIES_FILE: &str = "proxies.csv";
pub const DISTANCES_FILE: &str = "distances.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const COMPARISON_FILE: &str = "comparison.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub final_agg_acc: f64,
    pub final_per_acc: f64,
    pub wall_clock_secs: f64,
    pub config: ExperimentConfig,
}

/// Builds the dataset named by the config.
pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match cfg.dataset {
        DatasetKind::Blobs => generate_blobs(&cfg.blob_config(), cfg.seed),
        DatasetKind::Csv => {
            let path = cfg
                .csv_path
                .as_ref()
                .ok_or_else(|| Error::Config(vec!["csv_path: required when dataset = \"csv\"".into()]))?;
            load_csv(path, cfg.classes)
        }
    }
}

/// Splits `data` across clients according to the config.
pub fn build_partition(cfg: &ExperimentConfig, data: &Dataset) -> Result<PartitionSpec> {
    match cfg.partition {
        PartitionKind::LabelSkew => partition_label_skew(data, &cfg.label_skew(data.classes()), cfg.global_test_per_class, cfg.seed),
        PartitionKind::Dirichlet => partition_dirichlet(
            data,
            cfg.clients,
            cfg.dirichlet_alpha,
            cfg.global_test_per_class,
            cfg.seed,
        ),
    }
}

/// Runs the configured federation in memory.
pub fn simulate(cfg: &ExperimentConfig) -> Result<RunLog> {
    cfg.validate()?;
    let data = build_dataset(cfg)?;
    let partition = build_partition(cfg, &data)?;
    let arch = cfg.architecture(data.dim(), data.classes());
    let (server, clients) = setup(&arch, cfg.federation(), &data, &partition, cfg.seed)?;
    run_federation(server, clients, &data, &partition)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs the federation and writes `metrics.csv`, `clients.csv`,
/// `proxies.csv`, `distances.csv` and `summary.json` under `output_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let started = Instant::now();
    let log = simulate(cfg)?;
    let dir = PathBuf::from(&cfg.output_dir);
    create_dir(&dir)?;
    write_metrics_csv(dir.join(METRICS_FILE), &log.rounds)?;
    write_clients_csv(dir.join(CLIENTS_FILE), &log.rounds)?;
    write_proxies_csv(dir.join(PROXIES_FILE), &log.rounds)?;
    write_distances_csv(dir.join(DISTANCES_FILE), &log.rounds)?;
    let last = log
        .rounds
        .last()
        .ok_or_else(|| Error::Empty("run produced no rounds".into()))?;
    let summary = RunSummary {
        strategy: cfg.strategy,
        seed: cfg.seed,
        final_agg_acc: last.agg_acc,
        final_per_acc: last.mean_per_acc,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Serialize(e.to_string()))?;
    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

/// Mean and standard deviation of one strategy's final accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: StrategyKind,
    pub n_seeds: usize,
    pub agg_mean: f64,
    pub agg_std: f64,
    pub per_mean: f64,
    pub per_std: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Runs every (strategy, seed) cell under `output_dir/<strategy>_seed<k>` and
/// writes `comparison.csv` with one row per strategy in the given order.
pub fn compare(cfg: &ExperimentConfig, strategies: &[StrategyKind], seeds: &[u64]) -> Result<Vec<ComparisonRow>> {
    if strategies.is_empty() {
        return Err(Error::Config(vec!["strategies: at least one is required".into()]));
    }
    if seeds.is_empty() {
        return Err(Error::Config(vec!["seeds: at least one is required".into()]));
    }
    let root = PathBuf::from(&cfg.output_dir);
    let cells: Vec<ExperimentConfig> = strategies
        .iter()
        .flat_map(|&s| {
            let root = &root;
            seeds.iter().map(move |&seed| {
                let mut c = cfg.clone();
                c.strategy = s;
                c.seed = seed;
                c.output_dir = root.join(format!("{}_seed{seed}", s.name())).to_string_lossy().into_owned();
                c
            })
        })
        .collect();
    for c in &cells {
        c.validate()?;
    }
    let summaries: Vec<RunSummary> = cells.par_iter().map(run).collect::<Result<_>>()?;

    let rows: Vec<ComparisonRow> = strategies
        .iter()
        .zip(summaries.chunks(seeds.len()))
        .map(|(&strategy, runs)| {
            let agg: Vec<f64> = runs.iter().map(|r| r.final_agg_acc).collect();
            let per: Vec<f64> = runs.iter().map(|r| r.final_per_acc).collect();
            let (agg_mean, agg_std) = mean_std(&agg);
            let (per_mean, per_std) = mean_std(&per);
            ComparisonRow {
                strategy,
                n_seeds: runs.len(),
                agg_mean,
                agg_std,
                per_mean,
                per_std,
            }
        })
        .collect();

    create_dir(&root)?;
    let path = root.join(COMPARISON_FILE);
    let mut out = String::from("strategy,n_seeds,agg_mean,agg_std,per_mean,per_std\n");
    for r in &rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.strategy, r.n_seeds, r.agg_mean, r.agg_std, r.per_mean, r.per_std
        ));
    }
    fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}
