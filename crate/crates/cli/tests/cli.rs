use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ogab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ogab"))
        .args(args)
        .arg("--log-level")
        .arg("warn")
        .current_dir(dir)
        .output()
        .expect("spawn ogab")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn without_timing(path: &Path) -> Value {
    let mut v = json(path);
    ogab::experiment::strip_timing(&mut v);
    v
}

const SMALL_SPEC: &str = r#"{
  "version": 1, "n_samples": 300, "n_features": 6, "n_informative": 4,
  "n_redundant": 1, "n_classes": 3, "n_clusters_per_class": 1,
  "class_weights": [0.6, 0.3, 0.1], "class_sep": 2.0, "seed": 3
}"#;

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    write(dir, "spec.json", SMALL_SPEC);
    let text = format!(
        r#"{{"version": 1, "dataset": {{"kind": "synthetic", "spec": "spec.json"}},
            "model": {{"hidden_dim": 8}}, "train": {{"epochs": 15, "batch_size": 64}}{extra}}}"#
    );
    write(dir, "config.json", &text)
}

#[test]
fn gen_data_default_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = ogab(dir.path(), &["gen-data", "--out", "a/data.csv"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = ogab(dir.path(), &["gen-data", "--out", "b/data.csv"]);
    assert!(b.status.success());

    let csv_a = std::fs::read(dir.path().join("a/data.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(dir.path().join("b/data.csv")).unwrap());
    let text = String::from_utf8(csv_a).unwrap();
    assert_eq!(text.lines().count(), 10_001);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 21);

    let side = json(&dir.path().join("a/data.json"));
    assert_eq!(side["imbalance_ratio"], 16.0);
    assert_eq!(side["n_samples"], 10_000);
    assert_eq!(side, json(&dir.path().join("b/data.json")));
}

#[test]
fn invalid_spec_lists_the_bad_fields() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "bad.json",
        r#"{"version": 1, "n_samples": 0, "n_features": 20, "n_informative": 10, "n_redundant": 5,
            "n_classes": 3, "class_weights": [1.0], "class_sep": 1.0, "seed": 0}"#,
    );
    let out = ogab(dir.path(), &["gen-data", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("n_samples") && err.contains("class_weights"), "{err}");
}

#[test]
fn train_twice_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path(), r#", "activations": ["ogab"], "groups": [2], "seeds": [4]"#);
    for out in ["r1", "r2"] {
        let o = ogab(dir.path(), &["train", "--config", "config.json", "--out-dir", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    for f in ["checkpoint.json", "loss_curve.csv"] {
        assert_eq!(std::fs::read(r1.join(f)).unwrap(), std::fs::read(r2.join(f)).unwrap(), "{f}");
    }
    let result = without_timing(&r1.join("run_result.json"));
    assert_eq!(result, without_timing(&r2.join("run_result.json")));
    assert_eq!(result["status"], "ok");
    assert_eq!(result["G"], 2);
    assert!(json(&r1.join("run_result.json"))["timing"]["total_seconds"].is_number());
    let curve = std::fs::read_to_string(r1.join("loss_curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("epoch,loss"));
    assert_eq!(curve.lines().count(), 16);
}

#[test]
fn train_needs_a_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path(), r#", "activations": ["relu", "tanh"], "seeds": [0]"#);
    let out = ogab(dir.path(), &["train", "--config", "config.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_csv_is_an_input_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "config.json",
        r#"{"version": 1, "dataset": {"kind": "csv", "path": "absent/thyroid.csv", "label_column": "class"},
            "activations": ["relu"], "seeds": [0]}"#,
    );
    let out = ogab(dir.path(), &["train", "--config", "config.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent/thyroid.csv"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "config.json", r#"{"version": 1, "train": {"lr": 0.1}}"#);
    for cmd in ["train", "bench", "ablate", "params"] {
        let out = ogab(dir.path(), &[cmd, "--config", "config.json"]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("lr"));
    }
    let out = ogab(dir.path(), &["bench", "--config", "nowhere.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn diverging_runs_exit_with_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "spec.json", SMALL_SPEC);
    // a step size this large overflows on the first update
    write(
        dir.path(),
        "config.json",
        r#"{"version": 1, "dataset": {"kind": "synthetic", "spec": "spec.json"}, "activations": ["identity"],
            "seeds": [0, 1], "model": {"hidden_dim": 8}, "train": {"epochs": 5, "learning_rate": 1e300}}"#,
    );
    let out = ogab(dir.path(), &["bench", "--config", "config.json", "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let table = json(&dir.path().join("o/bench.json"));
    assert_eq!(table["failed_runs"], 2);
}

#[test]
fn bench_is_deterministic_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path(), r#", "activations": ["identity", "relu", "ogab"], "groups": [1, 2], "seeds": [0, 1]"#);
    for (out, workers) in [("b1", "1"), ("b2", "3")] {
        let o = ogab(dir.path(), &["bench", "--config", "config.json", "--out-dir", out, "--workers", workers]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (b1, b2) = (dir.path().join("b1"), dir.path().join("b2"));
    assert_eq!(without_timing(&b1.join("bench.json")), without_timing(&b2.join("bench.json")));
    for f in ["bench.csv", "bench_summary.csv"] {
        assert_eq!(std::fs::read(b1.join(f)).unwrap(), std::fs::read(b2.join(f)).unwrap(), "{f}");
    }

    let csv = std::fs::read_to_string(b1.join("bench.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("activation,G,f1_mean,f1_std,bacc_mean,bacc_std"));
    assert_eq!(csv.lines().count(), 1 + 4);
    let summary = std::fs::read_to_string(b1.join("bench_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3);

    // stored means equal the mean of the stored per-seed values
    let table = json(&b1.join("bench.json"));
    for row in table["rows"].as_array().unwrap() {
        let f1: Vec<f64> = row["runs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["metrics"]["f1"].as_f64().unwrap())
            .collect();
        let mean = f1.iter().sum::<f64>() / f1.len() as f64;
        assert!((mean - row["f1_mean"].as_f64().unwrap()).abs() < 1e-9);
    }
}

#[test]
fn single_cell_bench_matches_the_run() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path(), r#", "activations": ["tanh"], "seeds": [7]"#);
    assert!(ogab(dir.path(), &["bench", "--config", "config.json", "--out-dir", "b"]).status.success());
    assert!(ogab(dir.path(), &["train", "--config", "config.json", "--out-dir", "t"]).status.success());
    let table = json(&dir.path().join("b/bench.json"));
    let run = without_timing(&dir.path().join("t/run_result.json"));
    let row = &table["rows"][0];
    assert_eq!(row["runs"][0], run);
    assert_eq!(row["f1_mean"], run["metrics"]["f1"]);
    assert_eq!(row["bacc_mean"], run["metrics"]["balanced_accuracy"]);
    assert_eq!(row["f1_std"], 0.0);
}

#[test]
fn ablation_has_four_rows_and_drops_a_without_orthogonality() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path(), r#", "seeds": [0], "ablation_groups": 2"#);
    let o = ogab(dir.path(), &["ablate", "--config", "config.json", "--out-dir", "a"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("a/ablation.csv")).unwrap();
    let names: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["relu", "ogab-no-orth", "ogab-no-bias", "ogab"]);

    let layers = |variant: &str| {
        json(&dir.path().join(format!("a/ablation_checkpoints/{variant}.json")))["activations"]
            .as_array()
            .unwrap()
            .clone()
    };
    for layer in layers("ogab-no-orth") {
        assert!(layer.get("skew_source").is_none());
        assert!(layer.get("gate").is_some());
    }
    for layer in layers("ogab-no-bias") {
        assert!(layer.get("skew_source").is_some());
        assert!(layer.get("gate").is_none());
    }
}

#[test]
fn params_for_the_two_class_architecture() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "config.json",
        r#"{"version": 1, "groups": [5], "model": {"input_dim": 21, "num_classes": 2}}"#,
    );
    let o = ogab(dir.path(), &["params", "--config", "config.json", "--out-dir", "p"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("p/params.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["variant", "G", "param_count", "overhead", "overhead_pct"]);
    assert_eq!(rows[1][..4], ["baseline", "", "9858", "0"]);
    assert_eq!(rows[2][..4], ["ogab", "5", "24273", "14415"]);
}

#[test]
fn embeddings_have_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path(), r#", "activations": ["relu"], "seeds": [0]"#);
    assert!(ogab(dir.path(), &["train", "--config", "config.json", "--out-dir", "t"]).status.success());
    let o = ogab(
        dir.path(),
        &["export-embeddings", "--config", "config.json", "--checkpoint", "t/checkpoint.json", "--layer", "2", "--out", "e.csv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 8 + 1);
    assert_eq!(header.last(), Some(&"label"));
    assert_eq!(text.lines().count(), 1 + 300);

    let o = ogab(
        dir.path(),
        &["export-embeddings", "--config", "config.json", "--checkpoint", "t/checkpoint.json", "--layer", "3"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("out of range"));
}
