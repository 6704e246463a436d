use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn stickflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stickflow"))
        .args(args)
        .current_dir(dir)
        .env_remove("STICKFLOW_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of a CSV artifact, skipping the meta line and header.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# stickflow "));
    lines.next().unwrap();
    lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn moments_table_two_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "m.json",
        r#"{"G": [[-1, 1], [2, -2]], "max_order": 3}"#,
    );
    let out = stickflow(
        dir.path(),
        &["moments", "--config", &cfg, "--out", "o", "--seed", "4"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("o/moments.csv"));
    // the zero multi-index plus 2 + 3 + 4 rows of orders one to three
    assert_eq!(rows.len(), 10);
    let row = rows.iter().find(|r| r[0] == "1" && r[1] == "0").unwrap();
    assert!((row[2].parse::<f64>().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    let json = read_json(&dir.path().join("o/moments.json"));
    assert_eq!(json["meta"]["seed"], 4);
    assert_eq!(json["meta"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn verify_covariance_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = stickflow(dir.path(), &["verify", "covariance", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0));
    let json = read_json(&dir.path().join("o/covariance.json"));
    assert_eq!(json["result"]["pass"], true);
    let v = json["result"]["value"].as_f64().unwrap();
    assert!((v + 0.005391).abs() < 1e-6, "{v}");
}

#[test]
fn failed_check_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // from pi = (0, 1) after 10 steps the marginal is nowhere near stationary
    let cfg = write(
        dir.path(),
        "w.json",
        r#"{"G": [[-1, 1], [2, -2]], "M": 20, "pi": [0, 1], "n": 10}"#,
    );
    let out = stickflow(
        dir.path(),
        &["verify", "weak-ergodicity", "--config", &cfg, "--out", "o"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn errors_exit_one_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"G": [[-1, 1], [2, -2]], "max_order": 2, "Q_matrix": 1}"#,
    );
    let out = stickflow(dir.path(), &["moments", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("Q_matrix"));

    let out = stickflow(dir.path(), &["moments"]);
    assert_eq!(out.status.code(), Some(1));
    let out = stickflow(dir.path(), &["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"G": [[-1, 1], [2, -2]], "pi": [1, 0], "n": 500, "replicates": 8}"#,
    );
    for o in ["a", "b"] {
        let out = stickflow(
            dir.path(),
            &[
                "simulate", "--config", &cfg, "--out", o, "--seed", "11", "--format", "csv",
            ],
        );
        assert!(out.status.success());
    }
    let a = std::fs::read(dir.path().join("a/occupation.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/occupation.csv")).unwrap();
    assert_eq!(a, b);
    assert!(!dir.path().join("a/simulate.json").exists());
    let rows = csv_rows(&dir.path().join("a/occupation.csv"));
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r[0] == "11"));
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_stickflow"))
        .args(["verify", "covariance", "--out", "o", "--format", "json"])
        .current_dir(dir.path())
        .env("STICKFLOW_SEED", "77")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        read_json(&dir.path().join("o/covariance.json"))["meta"]["seed"],
        77
    );
}

#[test]
fn occupation_of_given_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", r#"{"path": [1, 1, 2, 2, 2, 1, 2], "n": 6}"#);
    let out = stickflow(dir.path(), &["occupation", "--config", &cfg, "--out", "o"]);
    assert!(out.status.success());
    let json = read_json(&dir.path().join("o/occupation.json"));
    assert_eq!(json["result"]["taus"], serde_json::json!([1, 3, 2]));
    assert_eq!(json["result"]["labels"], serde_json::json!([1, 2, 1]));
    assert_eq!(json["result"]["measure"], serde_json::json!([0.5, 0.5]));
}

#[test]
fn accept_subset() {
    let dir = tempfile::tempdir().unwrap();
    let out = stickflow(
        dir.path(),
        &["accept", "--criterion", "1", "--criterion", "3", "--out", "o"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let json = read_json(&dir.path().join("o/accept.json"));
    assert_eq!(json["result"]["total"], 2);
    assert_eq!(json["result"]["passed"], 2);
}
