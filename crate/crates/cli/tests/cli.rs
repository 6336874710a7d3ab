use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn sysid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sysid")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn identify(dir: &Path, config: &str, name: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = write(dir, &format!("{name}.config.json"), config);
    let rec = dir.join(format!("{name}.record.json"));
    let mut args = vec!["identify", "--config", s(&cfg), "--out", s(&rec)];
    args.extend_from_slice(extra);
    (sysid(&args), rec)
}

fn record(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn estimate(rec: &Value, run: usize) -> Vec<f64> {
    rec["runs"][run]["A"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()))
        .collect()
}

const SCALAR: &str = r#"{"schema_version":1,"method":"simulate","system":{"A":0.5,"C":1,"x":1,"T":3}}"#;

#[test]
fn simulate_scalar_system() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", SCALAR);
    let out = dir.path().join("data");
    assert_eq!(code(&sysid(&["simulate", "--config", s(&cfg), "--out", s(&out)])), 0);
    let csv = fs::read_to_string(out.join("observations.csv")).unwrap();
    let ys: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(ys, vec![0.5, 0.25]);
    let sidecar: Value = serde_json::from_str(&fs::read_to_string(out.join("observations.json")).unwrap()).unwrap();
    assert_eq!(sidecar["T"], 3);
    assert!(out.join("trajectory.csv").is_file());
}

#[test]
fn simulate_minimal_horizon() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"schema_version":1,"method":"simulate","system":{"A":0.5,"x":1,"T":2}}"#,
    );
    let out = dir.path().join("data");
    assert_eq!(code(&sysid(&["simulate", "--config", s(&cfg), "--out", s(&out)])), 0);
    let csv = fs::read_to_string(out.join("observations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn missing_horizon_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"schema_version":1,"method":"simulate","system":{"A":0.5,"x":1}}"#,
    );
    let out = sysid(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("d"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`T`"));
}

#[test]
fn ridge_on_scalar_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", SCALAR);
    let data = dir.path().join("data");
    assert_eq!(code(&sysid(&["simulate", "--config", s(&cfg), "--out", s(&data)])), 0);
    let (out, rec) = identify(
        dir.path(),
        r#"{"schema_version":1,"method":"ridge","data":{"trajectory":"data/trajectory.csv"},"params":{"gamma":1}}"#,
        "ridge",
        &[],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let a = estimate(&record(&rec), 0);
    assert!((a[0] - 0.625 / 2.25).abs() < 1e-12);
    assert!((a[0] - 0.277778).abs() < 1e-6);
}

#[test]
fn altmin_on_zero_data() {
    let dir = TempDir::new().unwrap();
    let (out, rec) = identify(
        dir.path(),
        r#"{"schema_version":1,"method":"altmin","system":{"A":[[0,0],[0,0]],"C":[[1,0]],"x":[0,0],"T":4}}"#,
        "zero",
        &[],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = record(&rec);
    assert!(estimate(&r, 0).iter().all(|v| *v == 0.0));
    assert_eq!(r["runs"][0]["iterations"], 1);
}

#[test]
fn pgd_and_altmin_agree() {
    let dir = TempDir::new().unwrap();
    let system = r#""system":{"A":[[0.6,0.2],[-0.1,0.5]],"C":[[1,0.5]],"x":[1,-1],"T":6,"noise":0.05},"seed":3"#;
    let params = r#""params":{"gamma":2,"mu":2,"grad_tol":1e-10,"max_iters":400000}"#;
    let (o1, r1) = identify(
        dir.path(),
        &format!(r#"{{"schema_version":1,"method":"pgd",{system},{params}}}"#),
        "pgd",
        &[],
    );
    let (o2, r2) = identify(
        dir.path(),
        &format!(r#"{{"schema_version":1,"method":"altmin",{system},{params}}}"#),
        "altmin",
        &[],
    );
    assert_eq!(code(&o1), 0, "{}", String::from_utf8_lossy(&o1.stderr));
    assert_eq!(code(&o2), 0, "{}", String::from_utf8_lossy(&o2.stderr));
    let (r1, r2) = (record(&r1), record(&r2));
    assert!(r1["runs"][0]["residual"].as_f64().unwrap() <= 1e-8);
    assert!(r2["runs"][0]["residual"].as_f64().unwrap() <= 1e-8);
    let gap = estimate(&r1, 0)
        .iter()
        .zip(estimate(&r2, 0))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(gap <= 1e-4, "{gap}");
}

fn strip_clock(text: &str) -> String {
    text.lines()
        .filter(|l| !l.contains("wall_clock_seconds"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn records_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"schema_version":1,"method":"pgd","system":{"A":[[0.5,0.1],[0,0.4]],"C":[[1,0]],"x":[1,1],"T":5,"noise":0.1},"params":{"starts":3},"sweep":{"gamma":[1,2,3]}}"#;
    let (o1, r1) = identify(dir.path(), config, "a", &["--seed", "11"]);
    let (o2, r2) = identify(dir.path(), config, "b", &["--seed", "11", "--jobs", "3"]);
    assert_eq!(code(&o1), 0);
    assert_eq!(code(&o2), 0);
    let (t1, t2) = (fs::read_to_string(r1).unwrap(), fs::read_to_string(r2).unwrap());
    assert_eq!(strip_clock(&t1), strip_clock(&t2));
    let rec: Value = serde_json::from_str(&t1).unwrap();
    assert_eq!(rec["seed"], 11);
    assert_eq!(rec["config"]["seed"], 11);
    assert_eq!(rec["runs"].as_array().unwrap().len(), 3);
}

#[test]
fn exhausted_budget_exits_three_with_record() {
    let dir = TempDir::new().unwrap();
    let (out, rec) = identify(
        dir.path(),
        r#"{"schema_version":1,"method":"gd","system":{"A":[[0.5,0.2],[0.1,0.3]],"x":[1,2],"T":6},"params":{"max_iters":3}}"#,
        "gd",
        &[],
    );
    assert_eq!(code(&out), 3);
    assert_eq!(record(&rec)["runs"][0]["termination"], "max_iters");
}

#[test]
fn dimension_mismatch_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let (out, rec) = identify(
        dir.path(),
        r#"{"schema_version":1,"method":"altmin","system":{"A":0.5,"C":[[1,0]],"x":1,"T":3}}"#,
        "bad",
        &[],
    );
    assert_eq!(code(&out), 2);
    assert!(!rec.exists());
    let (out, _) = identify(
        dir.path(),
        r#"{"schema_version":1,"method":"ridge","data":{"trajectory":"nowhere.csv"}}"#,
        "missing",
        &[],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn report_merges_and_sorts() {
    let dir = TempDir::new().unwrap();
    let system = r#""system":{"A":[[0.5,0.2],[0.1,0.3]],"x":[1,2],"T":6}"#;
    let (o1, ridge) = identify(
        dir.path(),
        &format!(r#"{{"schema_version":1,"method":"ridge",{system}}}"#),
        "ridge",
        &[],
    );
    let (o2, gd) = identify(
        dir.path(),
        &format!(r#"{{"schema_version":1,"method":"gd",{system}}}"#),
        "gd",
        &[],
    );
    assert_eq!((code(&o1), code(&o2)), (0, 0));
    let table = dir.path().join("t.csv");
    assert_eq!(code(&sysid(&["report", s(&ridge), s(&gd), "--out", s(&table)])), 0);
    let mut reader = csv::Reader::from_path(&table).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for k in 8..12 {
        let a: f64 = rows[0][k].parse().unwrap();
        let b: f64 = rows[1][k].parse().unwrap();
        assert!((a - b).abs() <= 1e-8);
    }

    let (o3, sweep) = identify(
        dir.path(),
        &format!(r#"{{"schema_version":1,"method":"ridge",{system},"sweep":{{"gamma":[100,1,10]}}}}"#),
        "sweep",
        &["--jobs", "2"],
    );
    assert_eq!(code(&o3), 0);
    let out = sysid(&["report", s(&sweep)]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let gammas: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(gammas, vec![1.0, 10.0, 100.0]);
}

#[test]
fn report_input_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&sysid(&["report"])), 2);
    let bad = write(dir.path(), "old.json", r#"{"schema_version":0,"runs":[]}"#);
    assert_eq!(code(&sysid(&["report", s(&bad)])), 2);
}

#[test]
fn asymptotics_sweep() {
    let dir = TempDir::new().unwrap();
    let (out, rec) = identify(
        dir.path(),
        r#"{"schema_version":1,"method":"asymptotics","system":{"A":0.5,"C":1,"x":1,"T":3},"sweep":{"gamma":[1e3,1e4,1e5]}}"#,
        "asym",
        &[],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = record(&rec);
    assert!(r["diagnostics"]["top_gap"].as_f64().unwrap() <= 0.05);
    assert_eq!(r["runs"].as_array().unwrap().len(), 3);
}

#[test]
fn realization_from_system() {
    let dir = TempDir::new().unwrap();
    let (out, rec) = identify(
        dir.path(),
        r#"{"schema_version":1,"method":"realize","system":{"A":[[0.5,1],[0,0.3]],"B":[[0],[1]],"C":[[1,0]],"x":[0,0],"T":2}}"#,
        "realize",
        &[],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = record(&rec);
    assert_eq!(r["runs"][0]["details"]["order"], 2);
    assert!(r["runs"][0]["details"]["markov_error"].as_f64().unwrap() <= 1e-8);
}
