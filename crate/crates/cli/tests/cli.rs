use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
  "data": {"kind": "synthetic", "samples": 800, "num_classes": 3, "dim": 4, "imbalance_ratio": 5.0},
  "split": {"label_fraction": 0.05},
  "train": {
    "warmup_epochs": 5, "epochs_per_round": 2, "rounds": 1, "batch_size": 16,
    "model": {"expand_dim": 16, "channels": 4, "length": 4, "conv_channels": [4, 4, 4, 4, 8],
              "proj_hidden_dim": 8, "proj_dim": 4}
  }
}"#;

fn ssids(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssids"))
        .current_dir(root)
        .env("SSIDS_OUTPUT_ROOT", root.join("out"))
        .args(args)
        .output()
        .expect("spawn ssids")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    dir
}

fn summary(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn help_lists_every_command() {
    let dir = workspace();
    let text = ok(&ssids(dir.path(), &["--help"]));
    for cmd in ["prepare", "train", "selftrain", "evaluate", "ablate", "sweep"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn prepare_is_reproducible() {
    let dir = workspace();
    let root = dir.path();
    ok(&ssids(root, &["--config", "tiny.json", "prepare", "--out", "a"]));
    ok(&ssids(root, &["--config", "tiny.json", "prepare", "--out", "b"]));
    let a = fs::read(root.join("a/manifest.json")).unwrap();
    assert_eq!(a, fs::read(root.join("b/manifest.json")).unwrap());
    for f in ["train_labeled.bin", "train_unlabeled.bin", "test.bin"] {
        assert_eq!(fs::read(root.join("a").join(f)).unwrap(), fs::read(root.join("b").join(f)).unwrap());
    }
    let m: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(m["labeled"].as_array().unwrap().len(), 3);
}

#[test]
fn config_errors_and_runtime_errors_exit_differently() {
    let dir = workspace();
    let root = dir.path();
    let bad = ssids(root, &["--config", "tiny.json", "prepare", "--label-fraction", "0"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("label_fraction"));
    let bad_key = ssids(root, &["--config", "tiny.json", "--set", "train.loss.temperature=cold", "train"]);
    assert_eq!(bad_key.status.code(), Some(2));
    let missing = ssids(root, &["evaluate", "--checkpoint", "none.bin", "--dataset", "none.bin"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn selftrain_is_deterministic_and_leaves_inputs_untouched() {
    let dir = workspace();
    let root = dir.path();
    ok(&ssids(root, &["--config", "tiny.json", "prepare", "--out", "prep"]));
    let before: Vec<Vec<u8>> = ["train_labeled.bin", "train_unlabeled.bin", "test.bin"]
        .iter()
        .map(|f| fs::read(root.join("prep").join(f)).unwrap())
        .collect();
    let args = ["--config", "tiny.json", "selftrain", "--prepared", "prep", "--seed", "4"];
    let first = ok(&ssids(root, &[&args[..], &["--run-dir", "r1"]].concat()));
    let second = ok(&ssids(root, &[&args[..], &["--run-dir", "r2"]].concat()));
    assert_eq!(first, second);
    assert_eq!(summary(&root.join("r1")), summary(&root.join("r2")));
    for (f, bytes) in ["train_labeled.bin", "train_unlabeled.bin", "test.bin"].iter().zip(before) {
        assert_eq!(fs::read(root.join("prep").join(f)).unwrap(), bytes, "{f} changed");
    }

    let config: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("r1/config.json")).unwrap()).unwrap();
    assert_eq!(config["run"]["train"]["seed"], 4);
    assert_eq!(config["train"]["model"]["input_dim"], 4);
    for f in ["checkpoints/round_0.bin", "checkpoints/round_1.bin", "reports/round_1.json", "audit/pseudo_round_1.csv", "curves/loss.csv"] {
        assert!(root.join("r1").join(f).exists(), "{f}");
    }

    let eval = ok(&ssids(root, &["evaluate", "--checkpoint", "r1/checkpoints/round_1.bin", "--dataset", "prep/test.bin", "--format", "json"]));
    let rows: serde_json::Value = serde_json::from_str(&eval).unwrap();
    let f1 = summary(&root.join("r1"))["final_metrics"]["macro_f1"].as_f64().unwrap();
    assert!((rows[0]["F1"].as_f64().unwrap() - (f1 * 10000.0).round() / 100.0).abs() < 1e-9);
}

#[test]
fn zero_rounds_is_supervised_training() {
    let dir = workspace();
    let root = dir.path();
    ok(&ssids(root, &["--config", "tiny.json", "prepare", "--out", "prep"]));
    ok(&ssids(root, &["--config", "tiny.json", "selftrain", "--prepared", "prep", "--rounds", "0", "--run-dir", "s"]));
    ok(&ssids(root, &["--config", "tiny.json", "train", "--prepared", "prep", "--run-dir", "t"]));
    let s = summary(&root.join("s"));
    assert_eq!(s["rounds"].as_array().unwrap().len(), 1);
    assert_eq!(s["final_metrics"], summary(&root.join("t"))["final_metrics"]);
}

#[test]
fn ablation_table_and_plain_baseline() {
    let dir = workspace();
    let root = dir.path();
    ok(&ssids(root, &["--config", "tiny.json", "prepare", "--out", "prep"]));
    let table = ok(&ssids(root, &["--config", "tiny.json", "ablate", "--prepared", "prep", "--rounds", "0", "--run-dir", "abl", "--format", "csv"]));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(
        lines[0],
        "Metric,\"scl=off,wce_weights=off\",\"scl=on,wce_weights=off\",\"scl=off,wce_weights=on\",\"scl=on,wce_weights=on\""
    );
    assert!(lines[1].starts_with("Pre,") && lines[2].starts_with("F1,"));

    ok(&ssids(
        root,
        &[
            "--config", "tiny.json", "--set", "train.loss.use_scl=false", "--set", "train.loss.use_class_weights=false",
            "train", "--prepared", "prep", "--run-dir", "ce",
        ],
    ));
    assert_eq!(summary(&root.join("abl/scl=off,wce_weights=off"))["final_metrics"], summary(&root.join("ce"))["final_metrics"]);
}

#[test]
fn sweep_runs_every_grid_point() {
    let dir = workspace();
    let root = dir.path();
    let out = ok(&ssids(
        root,
        &["--config", "tiny.json", "--set", "train.rounds=0", "sweep", "--axis", "train.seed=1,2", "--axis", "unlabeled_fraction=0,1", "--workers", "2"],
    ));
    assert_eq!(out.lines().count(), 4);
    let sweep = root.join("out/sweep");
    for name in ["seed=1_unlabeled_fraction=0", "seed=2_unlabeled_fraction=1"] {
        assert!(sweep.join(name).join("summary.json").exists(), "{name}");
    }
    assert_eq!(fs::read_to_string(sweep.join("sweep.csv")).unwrap().lines().count(), 5);
}
