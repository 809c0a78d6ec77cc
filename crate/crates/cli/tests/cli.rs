use std::path::Path;
use std::process::Command;

fn canopy(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_canopy"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn world_then_oracle_run_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    canopy(dir.path(), &["gen-world", "--density", "0.02", "--length", "30", "--seed", "7", "--out", "w.txt"]);
    assert!(std::fs::read_to_string(dir.path().join("w.txt")).unwrap().starts_with("canopy-forest 1"));
    let args = ["run", "--world", "w.txt", "--set", "mode=oracle", "--set", "goal_distance=10", "--set", "seed=7"];
    let a = canopy(dir.path(), &args);
    let b = canopy(dir.path(), &args);
    assert_eq!(a, b);
    let r: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(r["mode"], "oracle");
    assert_eq!(r["seed"], 7);
}

#[test]
fn config_file_and_bad_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "mode = \"oracle\"\ngoal_distance = 8.0\n[scenario]\ndensity = 0.0\n").unwrap();
    let r: serde_json::Value = serde_json::from_str(&canopy(dir.path(), &["run", "--config", "run.toml"])).unwrap();
    assert_eq!(r["outcome"], "goal_reached");
    let out = Command::new(env!("CARGO_BIN_EXE_canopy"))
        .current_dir(dir.path())
        .args(["run", "--config", "run.toml", "--set", "speed=-1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn learning_pipeline_on_a_tiny_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    canopy(d, &["build-corpus", "--set", "n_scenarios=2", "--set", "frames_per_scenario=10", "--out", "corpus"]);
    let plan: serde_json::Value = serde_json::from_str(&canopy(d, &["select-features", "--data", "corpus/train.csv", "--budget-ms", "6"])).unwrap();
    assert!(plan["steps"].as_array().unwrap().iter().all(|s| s["cumulative_cost"].as_f64().unwrap() <= 6.0));
    canopy(d, &["train", "--train", "corpus/train.csv", "--holdout", "corpus/holdout.csv", "--stages", "2", "--out", "model.json"]);
    canopy(d, &["build-lut", "--model", "model.json", "--holdout", "corpus/holdout.csv"]);
    canopy(d, &["trajlib", "--set", "k=10", "--out", "lib.json"]);
    canopy(d, &["evaluate", "--model", "model.json", "--library", "lib.json", "--seeds", "1", "--densities", "0.01", "--set", "goal_distance=5", "--out", "suite"]);
    let csv = std::fs::read_to_string(d.join("suite.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(d.join("suite.json").exists());
}
