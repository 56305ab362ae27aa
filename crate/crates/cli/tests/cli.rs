use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mapfl");

const SMALL: &str = r#"
rounds = 3
clients = 4
sample_ratio = 0.5
samples_per_class = 60
global_test_per_class = 10
local_epochs = 2
"#;

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path
}

fn mapfl(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("MAPFL_OUTPUT_DIR").output().unwrap()
}

fn out_arg(dir: &Path) -> String {
    format!("output_dir={:?}", dir.to_string_lossy())
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let res = mapfl(&["run", "--config", cfg.to_str().unwrap(), "--set", &out_arg(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["metrics.csv", "clients.csv", "proxies.csv", "distances.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(String::from_utf8_lossy(&res.stdout).contains("agg_acc"));
}

#[test]
fn repeated_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = mapfl(&["run", "--config", cfg.to_str().unwrap(), "--set", &out_arg(out), "--set", "seed=9"]);
        assert!(res.status.success());
    }
    for f in ["metrics.csv", "clients.csv", "proxies.csv", "distances.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn fedrs_without_restriction_matches_fedavg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("avg"), dir.path().join("rs"));
    let r1 = mapfl(&["run", "--config", cfg.to_str().unwrap(), "--set", &out_arg(&a), "--set", "strategy=fedavg"]);
    let r2 = mapfl(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        &out_arg(&b),
        "--set",
        "strategy=fedrs",
        "--set",
        "alpha=1.0",
    ]);
    assert!(r1.status.success() && r2.status.success());
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
}

#[test]
fn compare_writes_one_row_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("cmp");
    let res = mapfl(&[
        "compare",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        &out_arg(&out),
        "--strategies",
        "fedavg,fedrs,fedphp,map",
        "--seeds",
        "1,2",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("fedavg,2,"));
    assert!(lines[4].starts_with("map,2,"));
}

#[test]
fn invalid_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sample_ratio = 1.5\n");
    let res = mapfl(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("sample_ratio"));

    let cfg = write_config(dir.path(), "unknown_key = 3\n");
    assert!(!mapfl(&["run", "--config", cfg.to_str().unwrap()]).status.success());
    let res = mapfl(&["run", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert!(!res.status.success());
    let res = mapfl(&["compare", "--config", cfg.to_str().unwrap(), "--strategies", "sgd", "--seeds", "1"]);
    assert!(!res.status.success());
}

#[test]
fn output_dir_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let configured = dir.path().join("configured");
    let cfg = write_config(dir.path(), &format!("{SMALL}output_dir = {:?}\n", configured.to_string_lossy()));
    let env_dir = dir.path().join("from_env");
    let res = Command::new(BIN)
        .args(["run", "--config", cfg.to_str().unwrap()])
        .env("MAPFL_OUTPUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(res.status.success());
    assert!(env_dir.join("metrics.csv").exists());
    assert!(!configured.exists());
}
