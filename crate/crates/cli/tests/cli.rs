use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("scenario.json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_nhfields"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

const TRANSPORT2: &str = r#"{"model": {"name": "wave"},
  "constraint": {"name": "linear-transport", "params": {"c": 2}},
  "task": "verify", "seed": 1, "points": 50}"#;

#[test]
fn verify_compatible_transport_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), TRANSPORT2, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["status"], "pass");
    assert_eq!(r["tolerances"]["nh_ddw_form"], 1e-8);
    for c in r["checks"].as_array().unwrap() {
        assert!(c["value"].as_f64().unwrap() < 1e-8, "{c}");
    }
}

#[test]
fn verify_characteristic_transport_fails_compatibility() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TRANSPORT2.replace(r#""c": 2"#, r#""c": 1"#);
    let out = run(dir.path(), &cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("compatibility"));
    assert_eq!(report(dir.path())["first_failure"], "compatibility");
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), r#"{"model": {"name": "membrane"}, "task": "verify"}"#, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("membrane"));
    for bad in [
        r#"{"model": {"name": "wave"}, "task": "verify", "colour": 3}"#,
        r#"{"model": {"name": "wave"}}"#,
        r#"{"model": {"name": "wave"}, "task": "verify", "tolerances": {"nope": 1}}"#,
        r#"{"model": {"name": "wave"}, "constraint": {"name": "incompressibility"}, "task": "verify"}"#,
        r#"{"model": {"name": "wave"}, "task": "fluid-identities"}"#,
        "not json",
    ] {
        assert_eq!(run(dir.path(), bad, &[]).status.code(), Some(2), "{bad}");
    }
}

#[test]
fn same_seed_gives_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(a.path(), TRANSPORT2, &["--seed", "7"]);
    run(b.path(), TRANSPORT2, &["--seed", "7"]);
    let ra = std::fs::read(a.path().join("out/report.json")).unwrap();
    let rb = std::fs::read(b.path().join("out/report.json")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(report(a.path())["scenario"]["seed"], 7);
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"name": "wave"}, "constraint": {"name": "cubic-transport"},
      "task": "verify", "grid": {"nu": 16}, "dt": 0.01, "steps": 20, "record_every": 5}"#;
    let out = run(dir.path(), cfg, &["--task", "evolve"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    for f in ["traj_fields.csv", "diag_constraint_drift.csv", "diag_holonomy_defect.csv", "diag_eta_gamma.csv", "diag_energy.csv"] {
        assert!(o.join(f).exists(), "{f}");
    }
    let diag = std::fs::read_to_string(o.join("diag_energy.csv")).unwrap();
    assert_eq!(diag.lines().next(), Some("t,value"));
    // Diagnostics are kept for every step, states every `record_every`.
    assert_eq!(diag.lines().count(), 1 + 21);
    let traj = std::fs::read_to_string(o.join("traj_fields.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("t,u,y1,ydot1"));
    assert_eq!(traj.lines().count(), 1 + 5 * 16);
}

#[test]
fn custom_coefficients_are_loaded_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.csv"), "1.0,-0.5,0.2,-1.5\n0.3,0.4,1.0,0.25\n").unwrap();
    let cfg = r#"{"model": {"name": "wave", "params": {"m": 2}},
      "constraint": {"name": "coupled-pair", "mode": "custom", "coefficients": "c.csv"},
      "task": "verify", "points": 10}"#;
    let out = run(dir.path(), cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fluid_identities_report_refinement_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"name": "fluid"}, "task": "fluid-identities", "points": 20, "refinement": [12, 23]}"#;
    let out = run(dir.path(), cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    let rows = r["summary"]["null_lagrangian_refinement"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["observed_order"].is_null());
    assert!(rows[1]["observed_order"].as_f64().unwrap() > 3.5);
}
