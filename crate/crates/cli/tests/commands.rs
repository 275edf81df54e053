use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn pan(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pan"));
    cmd.args(args).env_remove("PAN_SEED");
    if let Some(s) = env_seed {
        cmd.env("PAN_SEED", s);
    }
    cmd.output().expect("spawn pan")
}

fn ok(args: &[&str]) -> Output {
    let out = pan(args, None);
    assert!(out.status.success(), "pan {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn bundle(dir: &TempDir, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.path().join(name);
    let mut args = vec!["gen", "--out", p(&out), "--items", "150", "--seed", "1"];
    args.extend(extra);
    ok(&args);
    out
}

fn train(bundle: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["train", "--bundle", p(bundle), "--out", p(out), "--epochs", "20", "--seed", "1"];
    args.extend(extra);
    ok(&args);
}

#[test]
fn missing_output_directory_is_a_usage_error() {
    let out = pan(&["gen", "--items", "10"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn zero_episodes_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = pan(
        &["eval", "fewshot", "--checkpoint", "c.json", "--bundle", "b", "--out", p(dir.path()), "--episodes", "0"],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dimension_mismatch_names_both_sizes() {
    let dir = TempDir::new().unwrap();
    let wide = bundle(&dir, "wide", &["--dim", "16"]);
    let narrow = bundle(&dir, "narrow", &["--dim", "14"]);
    let run = dir.path().join("run");
    train(&wide, &run, &[]);
    let ck = run.join("checkpoint.json");
    let out = pan(
        &["eval", "pair-accuracy", "--checkpoint", p(&ck), "--bundle", p(&narrow), "--out", p(&dir.path().join("e"))],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("16") && err.contains("14"), "{err}");
}

#[test]
fn gradcheck_passes_and_catches_a_sign_error() {
    let good = ok(&["gradcheck", "--seeds", "5"]);
    let text = String::from_utf8_lossy(&good.stdout);
    assert!(text.contains("5 seeds") && text.contains("PASS"), "{text}");
    let bad = pan(&["gradcheck", "--seeds", "2", "--inject-sign-error"], None);
    assert_eq!(bad.status.code(), Some(1));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.contains("FAIL") && err.contains('.'), "{err}");
}

#[test]
fn flags_override_config_file_keys() {
    let dir = TempDir::new().unwrap();
    let gen_cfg = dir.path().join("gen.json");
    std::fs::write(&gen_cfg, r#"{"seed": 3, "synthetic": {"n_items": 120, "d": 13}}"#).unwrap();
    let b = dir.path().join("b");
    ok(&["gen", "--out", p(&b), "--config", p(&gen_cfg), "--dim", "14"]);
    let generator = &json(&b.join("manifest.json"))["generator"];
    assert_eq!(generator["seed"], 3);
    assert_eq!(generator["synthetic"]["n_items"], 120);
    assert_eq!(generator["synthetic"]["d"], 14);

    let train_cfg = dir.path().join("train.json");
    std::fs::write(&train_cfg, r#"{"train": {"epochs": 7, "lambda": 2.0}}"#).unwrap();
    let run = dir.path().join("run");
    ok(&["train", "--bundle", p(&b), "--out", p(&run), "--config", p(&train_cfg), "--lambda", "3"]);
    let config = &json(&run.join("manifest.json"))["config"];
    assert_eq!(config["train"]["epochs"], 7);
    assert_eq!(config["train"]["lambda"], 3.0);
    // Defaults are echoed too.
    assert!(config["train"]["learning_rate"].is_number());
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let (env, flag, other) = (dir.path().join("env"), dir.path().join("flag"), dir.path().join("other"));
    assert!(pan(&["gen", "--out", p(&env), "--items", "80"], Some("5")).status.success());
    ok(&["gen", "--out", p(&flag), "--items", "80", "--seed", "5"]);
    assert!(pan(&["gen", "--out", p(&other), "--items", "80", "--seed", "6"], Some("5")).status.success());
    let features = |d: &Path| std::fs::read(d.join("features.panf")).unwrap();
    assert_eq!(features(&env), features(&flag));
    assert_ne!(features(&other), features(&flag));
}

#[test]
fn repeated_commands_write_identical_files() {
    let dir = TempDir::new().unwrap();
    let b = bundle(&dir, "b", &[]);
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    train(&b, &r1, &["--encoder", "mlp", "--hidden", "6"]);
    train(&b, &r2, &["--encoder", "mlp", "--hidden", "6"]);
    for f in ["checkpoint.json", "history.csv", "manifest.json"] {
        assert_eq!(std::fs::read(r1.join(f)).unwrap(), std::fs::read(r2.join(f)).unwrap(), "{f}");
    }
}

fn sweep_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn sweep_interval_follows_the_hand_formula() {
    let dir = TempDir::new().unwrap();
    let b = bundle(&dir, "b", &[]);
    let out = dir.path().join("s");
    ok(&[
        "sweep", "--axis", "lambda", "--values", "0,1", "--runs", "3", "--bundle", p(&b), "--out", p(&out), "--epochs",
        "20",
    ]);
    let runs = sweep_rows(&out.join("sweep.csv"));
    let summary = sweep_rows(&out.join("summary.csv"));
    assert_eq!(runs.len(), 6);
    for row in &summary {
        let values: Vec<f64> = runs.iter().filter(|r| r[0] == row[0]).map(|r| r[2].parse().unwrap()).collect();
        let mean = values.iter().sum::<f64>() / 3.0;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        assert!((row[1].parse::<f64>().unwrap() - mean).abs() < 1e-12);
        assert!((row[2].parse::<f64>().unwrap() - 1.96 * sd / 3f64.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn single_sweep_run_equals_train_then_eval() {
    let dir = TempDir::new().unwrap();
    let b = bundle(&dir, "b", &[]);
    let out = dir.path().join("s");
    ok(&[
        "sweep", "--axis", "lambda", "--values", "2", "--bundle", p(&b), "--out", p(&out), "--epochs", "20", "--seed",
        "1",
    ]);
    let run = dir.path().join("run");
    train(&b, &run, &["--lambda", "2"]);
    let ck = run.join("checkpoint.json");
    let e = dir.path().join("e");
    ok(&["eval", "pair-accuracy", "--checkpoint", p(&ck), "--bundle", p(&b), "--out", p(&e), "--seed", "1"]);
    let swept = &sweep_rows(&out.join("sweep.csv"))[0][2];
    let direct = json(&e.join("metrics.json"))["reports"][0]["value"].as_f64().unwrap();
    assert_eq!(swept.parse::<f64>().unwrap(), direct);
}

#[test]
fn failed_sweep_runs_are_recorded_and_exit_nonzero() {
    let dir = TempDir::new().unwrap();
    let b = bundle(&dir, "b", &[]);
    let out = dir.path().join("s");
    let res = pan(
        &["sweep", "--axis", "lambda", "--values=-1,1", "--bundle", p(&b), "--out", p(&out), "--epochs", "5"],
        None,
    );
    assert_eq!(res.status.code(), Some(1));
    let summary = sweep_rows(&out.join("summary.csv"));
    assert_eq!(summary.len(), 2);
    assert_eq!(summary[0][4], "1");
    assert_eq!(summary[1][4], "0");
}
