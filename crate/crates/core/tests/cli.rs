//! End-to-end smoke tests for the `dualbeam` binary: exit codes and the
//! stability of the CSV/JSONL emitters under a real invocation.

use std::process::Command;

fn write_config(dir: &std::path::Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL_CONFIG: &str = r#"{
  "M": 4, "K": 2, "N": [2, 2], "L": 2,
  "gamma_db": 5.0, "w": [1.0, 1.0, 1.0, 1.0],
  "sigma2": 1.0, "epsilon": 1e-4, "max_iters": 2000
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dualbeam"))
}

#[test]
fn single_csv_roundtrip() {
    let dir = std::env::temp_dir().join("dualbeam-cli-csv");
    std::fs::create_dir_all(&dir).unwrap();
    let config = write_config(&dir, SMALL_CONFIG);
    let out = dir.join("rows.csv");
    let status = bin()
        .args(["single", "--config"])
        .arg(&config)
        .args(["--trials", "4", "--seed", "3", "--format", "csv", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "exit code {:?}", status.code());

    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap();
    assert!(header.starts_with("experiment,seed,"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn sweep_gamma_jsonl_has_one_row_per_point() {
    let dir = std::env::temp_dir().join("dualbeam-cli-jsonl");
    std::fs::create_dir_all(&dir).unwrap();
    let config = write_config(&dir, SMALL_CONFIG);
    let output = bin()
        .args(["sweep-gamma", "--config"])
        .arg(&config)
        .args([
            "--gamma-db",
            "0,5",
            "--trials",
            "3",
            "--format",
            "jsonl",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let rows: Vec<serde_json::Value> = stdout
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    // First line is metadata, then 2 sweep points x 3 trials.
    assert_eq!(rows.len(), 7);
    assert!(rows[0].get("config_hash").is_some());
    assert!(rows[1].get("status").is_some());
}

#[test]
fn missing_config_exits_1() {
    let status = bin()
        .args(["single", "--config", "/nonexistent/config.json"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn invalid_config_exits_1() {
    let dir = std::env::temp_dir().join("dualbeam-cli-bad");
    std::fs::create_dir_all(&dir).unwrap();
    let config = write_config(&dir, r#"{"M": 0, "K": 1}"#);
    let status = bin()
        .args(["single", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn overloaded_system_exits_2() {
    let dir = std::env::temp_dir().join("dualbeam-cli-infeasible");
    std::fs::create_dir_all(&dir).unwrap();
    // 4 substreams on a single antenna at a high target: never feasible.
    let config = write_config(
        &dir,
        r#"{
          "M": 1, "K": 2, "N": [2, 2], "L": 2,
          "gamma_db": 10.0, "w": [1.0, 1.0, 1.0, 1.0],
          "sigma2": 1.0, "epsilon": 1e-4, "max_iters": 200
        }"#,
    );
    let status = bin()
        .args(["single", "--config"])
        .arg(&config)
        .args(["--trials", "2"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
