use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn emdlot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emdlot"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn setup(root: &Path) {
    fs::write(
        root.join("synth.json"),
        r#"{"n_firms": 150, "priors": [0.6, 0.2, 0.2], "min_quarters": 6, "max_quarters": 8, "d_ch": 6,
            "text_signal_dims": 3, "marker_dims": 2}"#,
    )
    .unwrap();
    fs::write(
        root.join("train.json"),
        r#"{"hidden_size": 6, "feature_embed_size": 4, "num_clusters": 2, "batch_size": 16,
            "learning_rate": 0.01, "warmup_epochs": 2, "max_epochs": 3, "patience": 3}"#,
    )
    .unwrap();
    let out = emdlot(&["synth", "--config", p(&root.join("synth.json")), "--out", p(&root.join("data"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_eval_explain_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    setup(root);
    let (data, cfg, run) = (root.join("data"), root.join("train.json"), root.join("run"));

    let out = emdlot(&["train", "--data", p(&data), "--config", p(&cfg), "--out", p(&run), "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = read_json(&run.join("metrics.json"));
    let summary = read_json(&run.join("run.json"));
    assert_eq!(summary["config"]["seed"], 4);
    assert_eq!(summary["variant"], "full");

    let out = emdlot(&["eval", "--data", p(&data), "--checkpoint", p(&run.join("best.ckpt"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let evaluated: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(evaluated, metrics);

    let report = root.join("explain");
    let out = emdlot(&[
        "explain",
        "--data",
        p(&data),
        "--checkpoint",
        p(&run.join("best.ckpt")),
        "--out",
        p(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let comp = read_json(&report.join("composition.json"));
    let total: u64 = comp["counts"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()))
        .sum();
    assert_eq!(total, metrics["n_samples"].as_u64().unwrap());
    let modality = read_json(&report.join("modality.json"));
    let s = modality["text"].as_f64().unwrap() + modality["numeric"].as_f64().unwrap();
    assert!((s - 1.0).abs() < 1e-9);
    assert!(report.join("chapter.json").exists());
    assert!(report.join("heatmap_macro.csv").exists());
    let grids = fs::read_dir(&report)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("heatmap_financial"))
        .count();
    assert!(grids >= 1);
}

#[test]
fn ablate_runs_and_tune_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    setup(root);
    let (data, cfg) = (root.join("data"), root.join("train.json"));

    let abl = root.join("abl");
    let out = emdlot(&["ablate", "--variant", "ABL2", "--data", p(&data), "--config", p(&cfg), "--out", p(&abl)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_json(&abl.join("run.json"))["variant"], "ABL2");

    let runs = root.join("runs");
    let out = emdlot(&[
        "runs", "--n-valid", "1", "--jobs", "2", "--data", p(&data), "--config", p(&cfg), "--out", p(&runs),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&runs.join("runs.json"));
    assert!(summary["attempts"].as_u64().unwrap() >= 1);

    let tuned = root.join("tune");
    fs::write(
        root.join("base.json"),
        r#"{"max_epochs": 1, "warmup_epochs": 1, "feature_embed_size": 4}"#,
    )
    .unwrap();
    let small = root.join("small");
    fs::write(root.join("small.json"), r#"{"n_firms": 60, "min_quarters": 4, "max_quarters": 5, "d_ch": 4, "text_signal_dims": 2, "marker_dims": 1, "priors": [0.5, 0.25, 0.25]}"#).unwrap();
    assert!(emdlot(&["synth", "--config", p(&root.join("small.json")), "--out", p(&small)]).status.success());
    let out = emdlot(&[
        "tune",
        "--trials",
        "2",
        "--jobs",
        "2",
        "--data",
        p(&small),
        "--config",
        p(&root.join("base.json")),
        "--out",
        p(&tuned),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(tuned.join("trials.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        for key in ["trial", "config", "objective", "valid", "epochs"] {
            assert!(v.get(key).is_some());
        }
    }
    assert!(tuned.join("best_config.json").exists());
}

#[test]
fn exit_codes() {
    assert_eq!(emdlot(&["--help"]).status.code(), Some(0));
    assert_eq!(emdlot(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(emdlot(&["train", "--data"]).status.code(), Some(1));
    assert_eq!(emdlot(&["ablate", "--variant", "ABL9", "--data", "x", "--out", "y"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = emdlot(&["train", "--data", p(&missing), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let bad_cfg = dir.path().join("bad.json");
    fs::write(&bad_cfg, r#"{"hidden_sise": 4}"#).unwrap();
    let out = emdlot(&["train", "--data", p(&missing), "--config", p(&bad_cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));

    let garbage = dir.path().join("garbage.ckpt");
    fs::write(&garbage, "not json").unwrap();
    let out = emdlot(&["eval", "--data", p(&missing), "--checkpoint", p(&garbage)]);
    assert_eq!(out.status.code(), Some(1));
}
