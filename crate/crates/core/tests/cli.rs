//! The `fxcast` binary end to end, with small model settings to stay fast.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SAMPLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/sample_usdbdt.csv");
const FAST: &[&str] = &[
    "--lstm-hidden",
    "6",
    "--lstm-epochs",
    "2",
    "--gbc-estimators",
    "40",
];

fn fxcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fxcast"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("spawn fxcast")
}

fn out_arg(dir: &Path) -> String {
    dir.display().to_string()
}

fn ingested() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = fxcast(&["ingest", "--input", SAMPLE, "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    dir
}

fn train(dir: &Path, extra: &[&str]) -> Output {
    let out = out_arg(dir);
    let mut args = vec!["train", "--out", &out];
    args.extend_from_slice(FAST);
    args.extend_from_slice(extra);
    fxcast(&args)
}

fn read(dir: &Path, rel: &str) -> String {
    std::fs::read_to_string(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn json(dir: &Path, rel: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, rel)).unwrap()
}

#[test]
fn help_and_bad_flags() {
    assert_eq!(fxcast(&["--help"]).status.code(), Some(0));
    assert_eq!(fxcast(&["train", "--help"]).status.code(), Some(0));
    assert_eq!(fxcast(&["train", "--no-such-flag"]).status.code(), Some(64));
    assert_eq!(fxcast(&[]).status.code(), Some(64));
}

#[test]
fn missing_input_is_a_data_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing: PathBuf = dir.path().join("nope.csv");
    let o = fxcast(&["ingest", "--input", &out_arg(&missing), "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.csv"));
    assert!(!dir.path().join("series.csv").exists());
}

#[test]
fn leading_nulls_are_reported_in_validation() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("Date,Open,High,Low,Close,Adj Close,Volume\n");
    for d in 1..=3 {
        text.push_str(&format!("2020-01-{d:02},null,null,null,null,null,null\n"));
    }
    for d in 4..=20 {
        text.push_str(&format!("2020-01-{d:02},84,84.5,83.5,84.{d},84.{d},0\n"));
    }
    let input = dir.path().join("in.csv");
    std::fs::write(&input, text).unwrap();
    let o = fxcast(&["ingest", "--input", &out_arg(&input), "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(dir.path(), "validation.json");
    assert_eq!(v["dropped_rows"].as_array().unwrap().len(), 3);
    assert_eq!(v["rows_kept"], 17);
    assert_eq!(v["orientation"], "BDT_USD");
}

#[test]
fn training_is_byte_reproducible_and_arima_is_stationary() {
    let a = ingested();
    let b = ingested();
    for dir in [a.path(), b.path()] {
        let o = train(dir, &["--models", "lstm,arima", "--seed", "7"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read(a.path(), "models/lstm.json"), read(b.path(), "models/lstm.json"));
    // The log also records wall-clock seconds; only the losses must agree.
    let losses = |dir: &Path| -> Vec<String> {
        read(dir, "logs/lstm_train.csv")
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(losses(a.path()), losses(b.path()));
    let arima = json(a.path(), "models/arima.json");
    assert!(arima["phi"].as_f64().unwrap().abs() < 1.0);
    assert!(arima["theta"].as_f64().unwrap().abs() < 1.0);
}

#[test]
fn zero_batch_trains_full_batch() {
    let dir = ingested();
    let o = train(dir.path(), &["--models", "lstm", "--lstm-batch", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let model = json(dir.path(), "models/lstm.json");
    let windows = read(dir.path(), "series.csv").lines().count() - 1 - 50;
    assert_eq!(model["config"]["batch_size"], (windows as f64 * 0.8).floor() as u64);
}

#[test]
fn estimator_cap_bounds_stages() {
    let dir = ingested();
    let o = train(dir.path(), &["--models", "gbc", "--gbc-estimators", "100"]);
    assert_eq!(o.status.code(), Some(0));
    let stages = json(dir.path(), "models/gbc.json")["n_stages_used"].as_u64().unwrap();
    assert!((1..=100).contains(&stages));
}

#[test]
fn missing_artifacts_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = fxcast(&["train", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(4));

    let dir = ingested();
    assert_eq!(fxcast(&["evaluate", "--out", &out_arg(dir.path())]).status.code(), Some(4));
    assert_eq!(train(dir.path(), &["--models", "arima"]).status.code(), Some(0));
    // Report needs evaluation results.
    assert_eq!(fxcast(&["report", "--out", &out_arg(dir.path())]).status.code(), Some(4));
    // Backtest needs the classifier.
    assert_eq!(fxcast(&["backtest", "--out", &out_arg(dir.path())]).status.code(), Some(4));
}

#[test]
fn held_lock_is_a_usage_error() {
    let dir = ingested();
    std::fs::write(dir.path().join(".fxcast.lock"), "").unwrap();
    let o = train(dir.path(), &["--models", "arima"]);
    assert_eq!(o.status.code(), Some(64));
    assert!(!dir.path().join("models/arima.json").exists());
}

#[test]
fn config_file_supplies_flags_and_cli_overrides_it() {
    let dir = ingested();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# comment\nmodels = arima\nseed = 3\nnot-a-key = 1\n").unwrap();
    let out = out_arg(dir.path());
    let conf = out_arg(&conf);
    let o = fxcast(&["train", "--out", &out, "--config", &conf, "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = json(dir.path(), "manifest.json");
    assert_eq!(manifest["config"]["seed"], 9);
    assert!(dir.path().join("models/arima.json").exists());
    assert!(!dir.path().join("models/lstm.json").exists());
}

#[test]
fn full_small_run_produces_consistent_artifacts() {
    let dir = ingested();
    let out = out_arg(dir.path());
    assert_eq!(train(dir.path(), &["--dump-features"]).status.code(), Some(0));
    for cmd in ["evaluate", "backtest", "report"] {
        let o = fxcast(&[cmd, "--out", &out]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }

    let summary = json(dir.path(), "backtest/summary.json");
    let n_trades = summary["n_trades"].as_u64().unwrap() as usize;
    assert_eq!(read(dir.path(), "backtest/ledger.csv").lines().count(), n_trades + 1);

    let equity = read(dir.path(), "plots/equity.svg");
    let points = equity.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
    assert_eq!(points.split_whitespace().count(), n_trades + 1);

    let hist = read(dir.path(), "plots/returns_hist.svg");
    let bins = (n_trades as f64).sqrt().ceil() as usize;
    assert_eq!(hist.matches("class=\"bin\"").count(), bins);

    let manifest_bytes = read(dir.path(), "manifest.json");
    let report = read(dir.path(), "report.md");
    for model in ["lstm", "arima", "gbc_diagnostic"] {
        assert!(report.contains(&format!("| {model} |")), "{model} missing from report");
    }
    assert!(report.contains("Manifest SHA-256: `"));
    let manifest = json(dir.path(), "manifest.json");
    for artifact in manifest["artifacts"].as_array().unwrap() {
        let rel = artifact.as_str().unwrap();
        assert!(dir.path().join(rel).exists(), "{rel} listed but absent");
    }
    assert!(manifest_bytes.contains("report.md"));

    let metrics = json(dir.path(), "metrics.json");
    assert!(metrics["models"]["lstm"]["rmse"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("features/gbc_windows.csv").exists());
    assert!(!dir.path().join(".fxcast.lock").exists());
}
