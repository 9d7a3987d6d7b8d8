use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairaudit"))
        .args(args)
        .current_dir(dir)
        .env("BIAS_AUDIT_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn label_free(dir: &Path, benn: bool) {
    fs::write(dir.join("d.csv"), "g,x\n0,1\n0,2\n1,3\n1,4\n0,5\n1,6\n").unwrap();
    fs::write(dir.join("p.csv"), "prediction\n0.9\n0.1\n0.8\n0.7\n0.2\n0.6\n").unwrap();
    let cfg = serde_json::json!({
        "dataset": {"kind": "csv", "path": "d.csv", "schema": {"columns": ["g", "x"], "protected": ["g"]}},
        "model": {"kind": "predictions_file", "path": "p.csv"},
        "benn": benn,
    });
    fs::write(dir.join("c.json"), cfg.to_string()).unwrap();
}

#[test]
fn synth_writes_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["synth", "--count", "305", "--seed", "7", "--out", "s.csv"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(
        header.starts_with("biased,fair,random,label") && header.ends_with(",config_hash"),
        "{header}"
    );
    assert_eq!(lines.count(), 305);
}

#[test]
fn metrics_on_label_free_data() {
    let dir = tempfile::tempdir().unwrap();
    label_free(dir.path(), false);
    let o = run(dir.path(), &["--config", "c.json", "metrics"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let metrics = v["metrics"].as_array().unwrap();
    assert_eq!(metrics.len(), 21);
    let available = metrics.iter().filter(|m| !m["value"].is_null()).count();
    assert_eq!((available, 21 - available), (7, 14));
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn ensemble_over_metrics_json() {
    let dir = tempfile::tempdir().unwrap();
    label_free(dir.path(), false);
    assert_eq!(
        code(&run(dir.path(), &["--config", "c.json", "metrics", "--out", "m.json"])),
        0
    );
    let o = run(dir.path(), &["ensemble", "--input", "m.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    let max = m["metrics"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|e| e["value"].as_f64())
        .fold(0.0, f64::max);
    assert_eq!(v["ensemble"][0]["value"].as_f64().unwrap(), max);
    assert_eq!(v["config_hash"], m["config_hash"]);
}

#[test]
fn predictions_file_with_benn_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    label_free(dir.path(), true);
    let o = run(dir.path(), &["--config", "c.json", "audit"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("`model`"), "{}", stderr(&o));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"dataset": {"kind": "synthetic"}, "loss": {"eps": "wide"}}"#,
    )
    .unwrap();
    let o = run(dir.path(), &["--config", "c.json", "audit"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("loss.eps"), "{}", stderr(&o));
}

#[test]
fn audit_is_reproducible_and_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(dir.path(), &["audit", "--out", "a", "--epochs", "40"]);
    let b = run(dir.path(), &["audit", "--out", "b", "--epochs", "40"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0);
    for f in [
        "report.json",
        "report.txt",
        "training_log.csv",
        "generator.json",
        "tree.json",
        "metrics.csv",
    ] {
        let x = fs::read(dir.path().join("a").join(f)).unwrap();
        let y = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between reruns");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a/report.json")).unwrap()).unwrap();
    let hash = report["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    for f in [
        "report.txt",
        "training_log.csv",
        "generator.json",
        "tree.json",
        "metrics.csv",
        "run.json",
    ] {
        let text = fs::read_to_string(dir.path().join("a").join(f)).unwrap();
        assert!(text.contains(hash), "{f} lacks the config hash");
    }
    let other = run(dir.path(), &["audit", "--out", "c", "--epochs", "40", "--seed", "1"]);
    let r2: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("c/report.json")).unwrap()).unwrap();
    assert_eq!(code(&other), 0);
    assert_ne!(r2["config_hash"], report["config_hash"]);
}

#[test]
fn guideline_failure_exits_two_unless_disabled() {
    let dir = tempfile::tempdir().unwrap();
    let strict =
        r#"{"dataset": {"kind": "synthetic"}, "guidelines": {"variance_bound": 0.0}, "train": {"epochs": 40}}"#;
    fs::write(dir.path().join("c.json"), strict).unwrap();
    assert_eq!(code(&run(dir.path(), &["--config", "c.json", "audit"])), 2);
    let lax = strict.replacen('{', r#"{"fail_on_guidelines": false, "#, 1);
    fs::write(dir.path().join("c.json"), lax).unwrap();
    assert_eq!(code(&run(dir.path(), &["--config", "c.json", "audit"])), 0);
}

#[test]
fn mitigation_error_names_the_group() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["mitigate", "--epochs", "5"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("biased=0"), "{}", stderr(&o));
}

#[test]
fn mitigation_with_threshold_met_leaves_data_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["mitigate", "--epochs", "5", "--threshold-variance", "1.0", "--out", "m"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = fs::read_to_string(dir.path().join("m/mitigated.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 306);
    let log = fs::read_to_string(dir.path().join("m/mitigation_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1);
    assert!(dir.path().join("m/mitigation_delta.csv").exists());
}

#[test]
fn missing_labels_block_mitigation() {
    let dir = tempfile::tempdir().unwrap();
    label_free(dir.path(), false);
    let cfg = r#"{"dataset": {"kind": "csv", "path": "d.csv", "schema": {"columns": ["g", "x"], "protected": ["g"]}},
        "mitigation_audit": false}"#;
    fs::write(dir.path().join("c.json"), cfg).unwrap();
    let o = run(dir.path(), &["--config", "c.json", "mitigate"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("label"), "{}", stderr(&o));
}

#[test]
fn cross_validation_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["audit", "--folds", "5", "--epochs", "20", "--out", "o"]);
    assert!(code(&o) == 0 || code(&o) == 2, "{}", stderr(&o));
    let cv: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("o/cv_report.json")).unwrap()).unwrap();
    assert_eq!(cv["folds"][0]["benn_values"].as_array().unwrap().len(), 5);
}
