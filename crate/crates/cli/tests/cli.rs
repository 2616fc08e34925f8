use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jsonschema::JSONSchema;
use serde_json::Value;

fn hermqv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hermqv"))
        .args(args)
        .env_remove("HERMQV_WORKERS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn crate_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn assert_schema(name: &str, v: &Value) {
    let text = std::fs::read_to_string(crate_path(&format!("schemas/{name}.schema.json"))).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let compiled = JSONSchema::compile(&schema).unwrap();
    let msgs: Vec<String> = match compiled.validate(v) {
        Ok(()) => Vec::new(),
        Err(errors) => errors.map(|e| format!("{e} at {}", e.instance_path)).collect(),
    };
    assert!(msgs.is_empty(), "{name}: {msgs:?}");
}

fn write_config(dir: &tempfile::TempDir, body: &str) -> String {
    let p = dir.path().join("c.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{
  "spec": {"q": 1, "H1": 0.85, "H2": 0.7, "dependence": "dependent", "coupling": "subordinated"},
  "schedule": {"kind": "fixed", "c": 1.0},
  "N_grid": [16, 32, 64],
  "R": 100,
  "seed": 3,
  "statistic": "V",
  "options": {"n_inner": 64}
}"#;

#[test]
fn classify_examples() {
    let o = hermqv(&["classify", "--q", "1", "--h1", "0.7", "--h2", "0.7", "--rho", "0", "--dependence", "dependent"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_schema("regime_report", &v);
    assert_eq!(v["dominant"], "V3");
    assert_eq!(v["limit_law"]["family"], "Gaussian");

    let o = hermqv(&["classify", "--q", "1", "--h1", "0.7", "--h2", "0.7", "--dependence", "independent"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["dominant"], "V2");
    assert_eq!(v["limit_law"]["family"], "Rosenblatt");
    assert!((v["limit_law"]["index"].as_f64().unwrap() - 0.7).abs() < 1e-12);
}

#[test]
fn classify_errors_and_boundary() {
    let o = hermqv(&["classify", "--q", "1", "--h1", "1.2", "--h2", "0.7", "--dependence", "dependent"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("(1/2, 1)"));
    assert!(o.stdout.is_empty());

    // ρ(H2-H1) = ν2 exactly
    let o = hermqv(&["classify", "--q", "1", "--h1", "0.85", "--h2", "0.7", "--rho", "-1", "--dependence", "dependent"]);
    assert_eq!(code(&o), 3);
    let v = json(&o);
    assert_schema("regime_report", &v);
    assert_eq!(v["dominant"], "boundary");

    assert_eq!(code(&hermqv(&["classify", "--q", "1", "--h1", "0.7"])), 2);
}

fn boundary_rows(q: &str, mode: &str) -> Vec<Vec<String>> {
    let o = hermqv(&["boundary", "--q", q, "--mode", mode, "--points", "5"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("H1,H2,q,mode"));
    lines.map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn boundary_segments() {
    let f = |s: &str| s.parse::<f64>().unwrap();
    let d = boundary_rows("1", "dependent");
    assert_eq!(d.len(), 5);
    assert!((f(&d[0][0]) - 0.875).abs() < 1e-12 && (f(&d[0][1]) - 0.5).abs() < 1e-12);
    assert!((f(&d[4][0]) - 1.0).abs() < 1e-12 && (f(&d[4][1]) - 1.0).abs() < 1e-12);
    assert_eq!(d[2][2], "1");
    assert_eq!(d[2][3], "dependent");
    let i = boundary_rows("1", "independent");
    assert!((f(&i[0][0]) - 0.75).abs() < 1e-12);
    let s = boundary_rows("16", "dependent");
    assert!((f(&s[0][0]) - (1.0 - 16.0 / 68.0)).abs() < 1e-12);
    assert_eq!(code(&hermqv(&["boundary", "--q", "1", "--mode", "dependent", "--points", "1"])), 2);
}

#[test]
fn simulate_formats_and_seed() {
    let args = ["simulate", "--h1", "0.85", "--n", "8", "--n-inner", "64", "--seed", "4"];
    let a = hermqv(&args);
    let b = hermqv(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("t,z1,z2"));
    assert_eq!(text.lines().count(), 10);
    let c = hermqv(&["simulate", "--h1", "0.85", "--n", "8", "--n-inner", "64", "--seed", "5"]);
    assert_ne!(c.stdout, text.as_bytes());

    let o = hermqv(&[
        "simulate", "--coupling", "independent", "--q", "2", "--h1", "0.8", "--h2", "0.75", "--n", "8", "--gamma",
        "0.5", "--format", "json",
    ]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_schema("path", &v);
    assert_eq!(v["t"][2], 1.0);
    assert_eq!(v["component2"]["order"], 3);
}

#[test]
fn simulate_diagnostics() {
    let o = hermqv(&["simulate", "--coupling", "kernel-grid", "--h1", "0.8", "--h2", "0.7", "--n", "4"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("too coarse"));
    let o = hermqv(&["simulate", "--h1", "0.85", "--h2", "0.71", "--n", "4"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn qv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, SMALL);
    let o = hermqv(&["qv", "--config", &cfg, "--n", "16"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rep,N,gamma,V,V1,V2,V3"));
    assert_eq!(lines.count(), 100);

    let o = hermqv(&["qv", "--config", &cfg, "--n", "16", "--format", "json"]);
    let v = json(&o);
    assert_schema("qv_rows", &v);
    let r = &v[7];
    let sum = r["V1"].as_f64().unwrap() + r["V2"].as_f64().unwrap() + 2.0 * r["V3"].as_f64().unwrap();
    assert!((sum - r["V"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn mc_report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, SMALL);
    let a = hermqv(&["mc", "--config", &cfg]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let v = json(&a);
    assert_schema("mc_output", &v);
    let b = Command::new(env!("CARGO_BIN_EXE_hermqv"))
        .args(["mc", "--config", &cfg])
        .env("HERMQV_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);

    let c = hermqv(&["mc", "--config", &cfg, "--seed", "4"]);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(json(&c)["report"]["config"]["seed"], 4);

    let out = dir.path().join("r.csv");
    let o = hermqv(&["mc", "--config", &cfg, "--format", "csv", "--output", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(out).unwrap();
    assert_eq!(csv.lines().next(), Some("N,mean,sd,skew,exkurt,slope_running"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn mc_rho_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.replace("\"seed\": 3,", "\"seed\": 3, \"rho_sweep\": [-2.0, 0.0, 2.0],");
    let cfg = write_config(&dir, &body);
    let o = hermqv(&["mc", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let runs = v.as_array().unwrap();
    assert_eq!(runs.len(), 3);
    for (run, dominant) in runs.iter().zip(["V2", "V3", "V1"]) {
        assert_schema("mc_output", run);
        assert_eq!(run["rms_dominant"][2], dominant);
    }
}

#[test]
fn mc_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, &SMALL.replace("\"R\": 100", "\"R\": 10"));
    assert_eq!(code(&hermqv(&["mc", "--config", &cfg])), 2);
    let cfg = write_config(&dir, &SMALL.replace("\"statistic\"", "\"stat\""));
    assert_eq!(code(&hermqv(&["mc", "--config", &cfg])), 2);
    assert_eq!(code(&hermqv(&["mc", "--config", "/nonexistent.json"])), 2);
}

#[test]
fn oracle_outputs() {
    let o = hermqv(&["oracle", "--beta-checks", "--seed", "2"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_schema("beta_checks", &v);
    assert!(v["max_rel_err"].as_f64().unwrap() < 1e-6);

    let o = hermqv(&["oracle", "--n-grid", "64,256"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_schema("oracle_report", &v);
    assert!(v["product_formula_max_dev"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["sigma3_table"].as_array().unwrap().len(), 2);

    assert_eq!(code(&hermqv(&["oracle", "--q", "1", "--h1", "1.2", "--h2", "0.55"])), 2);
}
