use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SOLENOID: &str = r#"
tasks = ["verify", "gibbs"]

[system]
kind = "solenoid"
b_radius = 0.3

[run]
seed = 11
iterations = 200
particles = 100
seed_plaques = 2
horizon = 400
radius_cs = 0.6
verify_samples = 256
probes = 8
"#;

const CAT: &str = r#"
tasks = ["verify"]

[system]
kind = "linear_torus"
matrix = [[2, 1], [1, 1]]

[run]
seed = 11
verify_samples = 256
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ugibbs"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg("--config").arg(cfg).arg("--out").arg(out).args(extra).output().unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("stderr is one JSON object")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn list_systems_names_every_kind() {
    let o = bin().arg("list-systems").output().unwrap();
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let kinds: Vec<&str> = v.as_array().unwrap().iter().map(|s| s["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["solenoid", "modified_solenoid", "two_solenoid", "swap_solenoid", "derived_anosov", "linear_torus"]);
    let o = bin().args(["--format", "csv", "list-systems"]).output().unwrap();
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("kind,description\n"));
}

#[test]
fn malformed_key_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "bad.cfg", &SOLENOID.replace("particles = 100", "particels = 100"));
    let o = run(&cfg, &d.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "Config");
}

#[test]
fn missing_seed_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "noseed.cfg", &SOLENOID.replace("seed = 11", ""));
    let o = run(&cfg, &d.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn key_of_another_system_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "mixed.cfg", &CAT.replace("matrix =", "amplitude = 0.1\nmatrix ="));
    let o = run(&cfg, &d.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("amplitude"));
}

#[test]
fn missing_config_file_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&d.path().join("absent.cfg"), &d.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seeded_runs_are_identical_and_embed_config() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "sol.cfg", SOLENOID);
    let (a, b, c) = (d.path().join("a"), d.path().join("b"), d.path().join("c"));
    assert!(run(&cfg, &a, &[]).status.success());
    assert!(run(&cfg, &b, &["--workers", "1"]).status.success());
    assert!(run(&cfg, &c, &["--seed", "12"]).status.success());
    let (sa, sb, sc) = (summary(&a), summary(&b), summary(&c));
    assert_eq!(ugibbs::experiment::canonical_summary(&sa), ugibbs::experiment::canonical_summary(&sb));
    assert_eq!(std::fs::read(a.join("convergence.csv")).unwrap(), std::fs::read(b.join("convergence.csv")).unwrap());
    assert_eq!(sa["schema_version"], 1);
    assert_eq!(sa["config"]["run"]["particles"], 100);
    assert_eq!(sa["config"]["run"]["depth"], 6);
    assert_eq!(sc["config"]["run"]["seed"], 12);
    assert_ne!(sa["tasks"]["gibbs"]["seed_distance"], sc["tasks"]["gibbs"]["seed_distance"]);
}

#[test]
fn compare_identical_and_incompatible() {
    let d = tempfile::tempdir().unwrap();
    let sol = write_config(d.path(), "sol.cfg", &SOLENOID.replace("[\"verify\", \"gibbs\"]", "[\"verify\"]"));
    let cat = write_config(d.path(), "cat.cfg", CAT);
    let (a, b, c) = (d.path().join("a"), d.path().join("b"), d.path().join("c"));
    assert!(run(&sol, &a, &[]).status.success());
    assert!(run(&sol, &b, &[]).status.success());
    assert!(run(&cat, &c, &[]).status.success());
    let o = bin().arg("compare").arg(&a).arg(&b).output().unwrap();
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["diff"], serde_json::json!([]));
    let o = bin().arg("compare").arg(&a).arg(&c).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "IncompatibleSystems");
}

#[test]
fn csv_format_prints_headline_metrics() {
    let d = tempfile::tempdir().unwrap();
    let cat = write_config(d.path(), "cat.cfg", CAT);
    let o = bin().args(["--format", "csv", "run", "--config"]).arg(&cat).arg("--out").arg(d.path().join("o")).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("metric,value\nstatus,PASS\n"), "{text}");
}
