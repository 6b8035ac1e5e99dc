use std::path::Path;
use std::process::{Command, Output};

use auprc_core::{ModelKind, ScoreRange, ScorerModel};

fn auprc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_auprc"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("AUPRC_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse().unwrap()))
        .unwrap_or_else(|| panic!("{key} missing from {text:?}"))
}

fn blobs(dir: &Path, n: usize, seed: u64) -> String {
    let o = auprc(dir, &["generate", "blobs", "--n", &n.to_string(), "--seed", &seed.to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("blobs.csv").to_string_lossy().into_owned()
}

/// One feature; positives all score above negatives under weight 1.
fn separable(dir: &Path) -> (String, String) {
    let mut csv = String::from("label,x,y\n");
    for i in 0..5 {
        csv += &format!("1,{},0\n", 2.0 + i as f64);
    }
    for i in 0..20 {
        csv += &format!("-1,{},0\n", -(i as f64) / 10.0);
    }
    let data = dir.join("sep.csv");
    std::fs::write(&data, csv).unwrap();
    let model = ScorerModel::from_weights(ModelKind::Linear, 2, 0, ScoreRange::default(), vec![1.0, 0.0]).unwrap();
    let path = dir.join("sep_model.json");
    std::fs::write(&path, model.to_json().unwrap()).unwrap();
    (data.to_string_lossy().into_owned(), path.to_string_lossy().into_owned())
}

#[test]
fn train_writes_trace_model_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path(), 600, 1);
    let o = auprc(dir.path(), &["train", "--data", &data, "--iters", "200", "--eval-every", "50"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(field(&out, "iterations "), 200.0);
    let val = field(&out, "val_auprc ");
    assert!(val > 0.5 && val <= 1.0, "{val}");
    for f in ["trace.csv", "model.json", "train.manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 201);
}

#[test]
fn train_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path(), 400, 2);
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = auprc(&out, &["train", "--data", &data, "--iters", "150", "--seed", "11"]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out.join("trace.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn missing_data_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = auprc(dir.path(), &["train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--data"));
}

#[test]
fn unreadable_data_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = auprc(dir.path(), &["train", "--data", "/nonexistent/x.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn perfect_ranking_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = separable(dir.path());
    let o = auprc(dir.path(), &["eval", "--data", &data, "--model", &model]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(field(&stdout(&o), "auprc "), 1.0);
}

#[test]
fn eval_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = separable(dir.path());
    let o = auprc(dir.path(), &["--json", "eval", "--data", &data, "--model", &model]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["auprc"], 1.0);
    assert_eq!(v["prior"], 0.2);
}

#[test]
fn pr_curve_area_matches_reported_auprc() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path(), 500, 3);
    let o = auprc(dir.path(), &["train", "--data", &data, "--iters", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let model = dir.path().join("model.json").to_string_lossy().into_owned();
    let o = auprc(dir.path(), &["eval", "--data", &data, "--model", &model, "--pr-curve", "curves/pr.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reported = field(&stdout(&o), "auprc ");
    let curve = std::fs::read_to_string(dir.path().join("curves/pr.csv")).unwrap();
    let (mut prev, mut area) = (0.0, 0.0);
    for line in curve.lines().skip(1) {
        let (r, p) = line.split_once(',').unwrap();
        let (r, p): (f64, f64) = (r.parse().unwrap(), p.parse().unwrap());
        area += (r - prev) * p;
        prev = r;
    }
    assert!((area - reported).abs() <= 1e-12, "{area} vs {reported}");
    assert!(dir.path().join("curves/pr.manifest.json").exists());
}

#[test]
fn corrupt_checkpoint_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = separable(dir.path());
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"kind\": \"linear\", \"weights\": [1.0").unwrap();
    let o = auprc(dir.path(), &["eval", "--data", &data, "--model", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("corrupt checkpoint"), "{}", stderr(&o));
}

#[test]
fn unknown_distribution_lists_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let o = auprc(dir.path(), &["simulate", "bias", "--dist", "cauchy"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for kind in ["binormal", "bibeta", "offset_uniform"] {
        assert!(err.contains(kind), "{err}");
    }
}

#[test]
fn interp_command_writes_its_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = auprc(
        dir.path(),
        &["--json", "simulate", "interp", "--sizes", "8,16", "--target", "200", "--repeats", "10"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("interp.csv"));
    for f in ["interp.csv", "interp.json", "interp.manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(!dir.path().join("bias.csv").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path(), 300, 4);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"trainer": {"max_iters": 40, "beta": 0.5}}"#).unwrap();
    let cfg = cfg.to_string_lossy().into_owned();

    let o = auprc(dir.path(), &["--config", &cfg, "train", "--data", &data]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(field(&stdout(&o), "iterations "), 40.0);

    let o = auprc(dir.path(), &["--config", &cfg, "train", "--data", &data, "--iters", "25"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(field(&stdout(&o), "iterations "), 25.0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("train.manifest.json")).unwrap()).unwrap();
    let trainer = &manifest["config"]["settings"]["trainer"];
    assert_eq!(trainer["max_iters"], 25);
    assert_eq!(trainer["beta"], 0.5);
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path(), 200, 5);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"trainer": {"max_iter": 40}}"#).unwrap();
    let o = auprc(dir.path(), &["--config", cfg.to_str().unwrap(), "train", "--data", &data]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("max_iter"));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_auprc"))
        .args(["generate", "blobs", "--n", "100"])
        .env("AUPRC_OUT_DIR", &target)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(target.join("blobs.csv").exists());
    assert!(!dir.path().join("blobs.csv").exists());
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path(), 300, 6);
    let o = auprc(
        dir.path(),
        &["train", "--data", &data, "--iters", "50", "--lr", "constant:1e308", "--weight-decay", "1"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn zero_threads_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = auprc(dir.path(), &["--threads", "0", "generate", "blobs"]);
    assert_eq!(o.status.code(), Some(2));
}
