use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn qdev(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdev")).args(args).env_remove("QDEV_SEED").output().unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    /// Qubit depolarizing model with a Brownian channel on jump 1.
    fn new() -> Self {
        let ws = Self { dir: tempfile::tempdir().unwrap() };
        let out = qdev(&["model", "new", "depolarizing", "--dim", "2", "--out", &ws.path("model.json")]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        ws.write("setup.json", r#"{"jumps": [1], "q": 1}"#);
        ws
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn bound_sweep_gives_one_row_per_time() {
    let ws = Workspace::new();
    let out = qdev(&["bound", "--model", &ws.path("model.json"), "--setup", &ws.path("setup.json"), "--r", "0.3", "--t", "1,2,5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("t,r_0,mean_0,lambda_0,exponent,prefactor,residual,bound,status"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",ok")));
    let exponent: f64 = lines[1].split(',').nth(4).unwrap().parse().unwrap();
    assert!((exponent - 0.022626546488012166).abs() < 1e-9);
}

#[test]
fn negative_threshold_exits_one_and_names_index() {
    let ws = Workspace::new();
    ws.write("setup2.json", r#"{"jumps": [1, 2], "q": 1}"#);
    let out = qdev(&["bound", "--model", &ws.path("model.json"), "--setup", &ws.path("setup2.json"), "--r", "0.1,-0.2"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["code"], "negative_threshold");
    assert_eq!(err["context"]["index"], 1);
    assert!(err["message"].as_str().unwrap().contains("r[1]"));
}

#[test]
fn simulate_requires_a_seed() {
    let ws = Workspace::new();
    let args = ["simulate", "--model", &ws.path("model.json"), "--setup", &ws.path("setup.json"), "--t-max", "0.1", "--paths", "10", "--r", "0"];
    let out = qdev(&args);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["code"], "missing_seed");

    let with_flag = qdev(&[&["--seed", "7"], &args[..]].concat());
    let with_env = Command::new(env!("CARGO_BIN_EXE_qdev")).args(args).env("QDEV_SEED", "7").output().unwrap();
    assert!(with_flag.status.success() && with_env.status.success());
    assert_eq!(with_flag.stdout, with_env.stdout);
}

#[test]
fn manifest_records_digests() {
    let ws = Workspace::new();
    let out_path = ws.path("tail.csv");
    let out = qdev(&[
        "--seed", "3", "simulate", "--model", &ws.path("model.json"), "--setup", &ws.path("setup.json"),
        "--t-max", "0.2", "--paths", "50", "--r", "0.1", "--out", &out_path,
    ]);
    assert!(out.status.success());
    let manifest: Value = serde_json::from_slice(&std::fs::read(format!("{out_path}.manifest.json")).unwrap()).unwrap();
    let hex = |p: &str| Sha256::digest(std::fs::read(p).unwrap()).iter().map(|b| format!("{b:02x}")).collect::<String>();
    assert_eq!(manifest["outputs"][&out_path], hex(&out_path));
    assert_eq!(manifest["inputs"][&ws.path("model.json")], hex(&ws.path("model.json")));
    assert_eq!(manifest["base_seed"], 3);
    assert_eq!(manifest["parameters"]["config"]["n_paths"], 50);
}

#[test]
fn schema_violation_reports_field_path() {
    let ws = Workspace::new();
    ws.write("bad.json", r#"{"jumps": [[[1, 0], [0, "x"]]]}"#);
    let out = qdev(&["bound", "--model", &ws.path("bad.json"), "--setup", &ws.path("setup.json"), "--r", "0.1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert!(err["message"].as_str().unwrap().contains("jumps[0]"), "{err}");
}

#[test]
fn unknown_verb_is_a_validation_error() {
    let out = qdev(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["code"], "usage");
}

#[test]
fn rate_refuses_non_kms_generators() {
    let ws = Workspace::new();
    let out = qdev(&["model", "new", "appendix-b", "--which", "psi-tilde", "--out", &ws.path("tilde.json")]);
    assert!(out.status.success());
    ws.write("one.json", r#"{"jumps": [0], "q": 1}"#);
    let out = qdev(&["rate", "--model", &ws.path("tilde.json"), "--setup", &ws.path("one.json"), "--range", "0:1:3"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["code"], "not_kms_symmetric");
}

#[test]
fn rate_grid_and_json_format() {
    let ws = Workspace::new();
    let out = qdev(&[
        "rate", "--model", &ws.path("model.json"), "--setup", &ws.path("setup.json"), "--range", "-0.5:0.5:5", "--format", "json",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    // symmetric around the mean 0 and zero there
    let rate = |i: usize| rows[i][1].as_f64().unwrap();
    assert!(rate(2).abs() < 1e-12);
    assert!((rate(0) - rate(4)).abs() < 1e-9);
    assert_eq!(doc["manifest"]["tool"], "qdev");
}

#[test]
fn inequalities_report_gap_and_transport() {
    let ws = Workspace::new();
    ws.write("rho.json", "[[0.9, 0.1], [0.1, 0.1]]");
    let alpha2 = format!("{}", 1.0 / (2.0 * 2f64.ln()) * 0.5);
    let out = qdev(&["inequalities", "--model", &ws.path("model.json"), "--state", &ws.path("rho.json"), "--lsi", &alpha2]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let value = |name: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(&format!("{name},"))).unwrap();
        line.split(',').nth(1).unwrap().parse().unwrap()
    };
    assert!((value("spectral_gap") - 1.0).abs() < 1e-10);
    assert!(value("w1_lower_bound") <= value("transport_rhs") + 1e-8);
    assert!(value("trace_distance_squared") <= value("poincare_transport_rhs") + 1e-9);
}

#[test]
fn concentrate_depolarizing() {
    let ws = Workspace::new();
    ws.write("conc.json", r#"{"variant": "depolarizing", "d": 2, "eigenvalues": [1, -1]}"#);
    let out = qdev(&["concentrate", "--input", &ws.path("conc.json"), "--t", "1,2", "--r", "0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).lines().count(), 3);
    ws.write("tig.json", r#"{"variant": "ti_gaussian", "prefactor": 1, "attested": false}"#);
    let out = qdev(&["concentrate", "--input", &ws.path("tig.json"), "--t", "1", "--r", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["code"], "hypothesis_not_attested");
}

#[test]
fn model_templates_round_trip() {
    let ws = Workspace::new();
    for (template, extra) in [
        ("classical", vec![]),
        ("tensor", vec!["--dim", "2", "--factors", "2"]),
        ("heat-bath", vec!["--beta", "0.5"]),
        ("counterexamples", vec!["--which", "p-channel"]),
        ("depolarizing", vec!["--sigma", "0.6,0.3,0.1"]),
    ] {
        let file = ws.path(&format!("{template}.json"));
        let state = ws.path(&format!("{template}-state.json"));
        let mut args = vec!["model", "new", template, "--out", &file, "--state-out", &state];
        args.extend(extra);
        let out = qdev(&args);
        assert!(out.status.success(), "{template}: {}", String::from_utf8_lossy(&out.stderr));
        let out = qdev(&["inequalities", "--model", &file, "--state", &state]);
        assert!(out.status.success(), "{template}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(Path::new(&state).exists());
    }
}

#[test]
fn compare_reports_consistency() {
    let ws = Workspace::new();
    let out = qdev(&[
        "--seed", "11", "compare", "--model", &ws.path("model.json"), "--setup", &ws.path("setup.json"),
        "--t-max", "1", "--paths", "200", "--r", "0.5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "consistent").unwrap();
    assert_eq!(row[col], "true");
}
