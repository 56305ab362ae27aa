//! Config-driven runs end to end: output files, CSV datasets, comparisons and
//! config errors.

use std::fs;

use mapfl::experiment::{
    compare, run, simulate, ExperimentConfig, CLIENTS_FILE, COMPARISON_FILE, DISTANCES_FILE, METRICS_FILE,
    PROXIES_FILE, SUMMARY_FILE,
};
use mapfl::fl::StrategyKind;
use mapfl::metrics::{CLIENTS_HEADER, DISTANCES_HEADER, METRICS_HEADER, PROXIES_HEADER};
use mapfl::Error;

fn quick(extra: &[&str]) -> ExperimentConfig {
    let mut o: Vec<String> = ["rounds = 4", "clients = 5", "sample_ratio = 0.4", "samples_per_class = 60", "local_epochs = 2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    o.extend(extra.iter().map(|s| s.to_string()));
    ExperimentConfig::from_toml_str("", &o).unwrap()
}

fn with_dir(mut cfg: ExperimentConfig, dir: &std::path::Path) -> ExperimentConfig {
    cfg.output_dir = dir.to_string_lossy().into_owned();
    cfg
}

#[test]
fn run_writes_every_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_dir(quick(&[]), dir.path());
    let summary = run(&cfg).unwrap();
    assert_eq!(summary.strategy, StrategyKind::Map);
    assert!((0.0..=1.0).contains(&summary.final_agg_acc));
    assert!((0.0..=1.0).contains(&summary.final_per_acc));
    for (file, header) in [
        (METRICS_FILE, &METRICS_HEADER[..]),
        (CLIENTS_FILE, &CLIENTS_HEADER[..]),
        (PROXIES_FILE, &PROXIES_HEADER[..]),
        (DISTANCES_FILE, &DISTANCES_HEADER[..]),
    ] {
        let text = fs::read_to_string(dir.path().join(file)).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, header.join(","), "{file}");
        assert!(text.lines().count() > 1, "{file} has no rows");
    }
    let metrics = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.lines().count(), 1 + cfg.rounds);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(json["strategy"], "map");
    assert_eq!(json["config"]["rounds"], 4);
}

#[test]
fn every_strategy_runs_with_both_transfers_and_partitions() {
    for strategy in ["fedavg", "fedrs", "fedphp", "map"] {
        for transfer in ["kd", "mmd"] {
            for partition in ["label_skew", "dirichlet"] {
                let cfg = quick(&[
                    &format!("strategy = \"{strategy}\""),
                    &format!("transfer = \"{transfer}\""),
                    &format!("partition = \"{partition}\""),
                ]);
                let log = simulate(&cfg).unwrap();
                assert_eq!(log.rounds.len(), 4);
                assert_eq!(log.hpms.iter().any(Option::is_some), strategy == "fedphp" || strategy == "map");
            }
        }
    }
}

#[test]
fn csv_dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let mut text = String::new();
    for i in 0..240 {
        let c = i % 4;
        text.push_str(&format!("{c},{},{}\n", c as f64 + 0.01 * (i % 7) as f64, -(c as f64) + 0.02 * (i % 5) as f64));
    }
    fs::write(&path, text).unwrap();
    let cfg = quick(&[
        "dataset = \"csv\"",
        &format!("csv_path = {:?}", path.to_string_lossy()),
        "global_test_per_class = 10",
        "clients = 3",
        "sample_ratio = 1.0",
    ]);
    let log = simulate(&cfg).unwrap();
    assert_eq!(log.global.classes(), 4);
    assert_eq!(log.global.input_dim(), 2);
}

#[test]
fn compare_writes_one_row_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_dir(quick(&[]), dir.path());
    let rows = compare(&cfg, &[StrategyKind::FedAvg, StrategyKind::Map], &[1, 2]).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.n_seeds == 2));
    let text = fs::read_to_string(dir.path().join(COMPARISON_FILE)).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(dir.path().join("fedavg_seed1").join(METRICS_FILE).exists());
    assert!(dir.path().join("map_seed2").join(SUMMARY_FILE).exists());

    // each cell matches a standalone run with the same seed
    let single = with_dir(quick(&["seed = 2", "strategy = \"fedavg\""]), &dir.path().join("single"));
    let s = run(&single).unwrap();
    let cell = fs::read(dir.path().join("fedavg_seed2").join(METRICS_FILE)).unwrap();
    assert_eq!(cell, fs::read(dir.path().join("single").join(METRICS_FILE)).unwrap());
    assert!(s.final_agg_acc >= 0.0);
}

#[test]
fn invalid_configs_are_rejected_with_key_names() {
    match ExperimentConfig::from_toml_str("sample_ratio = 0.0\nalpha = 2.0\n", &[]) {
        Err(Error::Config(msgs)) => {
            assert!(msgs.iter().any(|m| m.starts_with("sample_ratio")));
            assert!(msgs.iter().any(|m| m.starts_with("alpha")));
        }
        other => panic!("expected config error, got {other:?}"),
    }
    assert!(ExperimentConfig::from_toml_str("rounds = 3\nbogus = 1\n", &[]).is_err());
    assert!(ExperimentConfig::from_toml_str("local_epochs = 1", &[]).is_err());
    assert!(simulate(&quick(&["local_epochs = 1", "strategy = \"fedavg\""])).is_ok());
}

#[test]
fn config_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(&["strategy = \"fedphp\"", "mmd_bandwidth = 2.5"]);
    let path = dir.path().join("exp.toml");
    fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(ExperimentConfig::load(&path, &[]).unwrap(), cfg);
}
