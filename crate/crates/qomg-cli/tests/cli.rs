//! End-to-end checks of the qomg binary: exit codes, determinism, file
//! outputs.

use std::path::Path;
use std::process::{Command, Output};

fn qomg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qomg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const CUSTOM: &str = r#"
units = "dimensionless"
omega_m = 0.9
omega_rotation = 0.35
chi_tilde = 0.15
g0_tilde = 0.1
alpha_re = 0.5
beta_re = 0.3

[scenario.ratesweep]
engine = "analytic"
sweep = "omega_rotation"
values = [0.1, 0.2, 0.3]
time = 6.0
"#;

#[test]
fn list_names_every_builtin_scenario() {
    let out = qomg(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["fig2", "fig3", "fig4", "fig5", "fig6a", "fig6b", "fig7", "fig8", "fig9", "fig10"]
    {
        assert!(text.lines().any(|l| l.starts_with(name)), "missing {name}: {text}");
    }
}

#[test]
fn run_is_deterministic_and_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CUSTOM);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let r = qomg(&["run", "ratesweep", "--config", &cfg, "--out", &out.to_string_lossy()]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let csv_a = std::fs::read(out_a.join("ratesweep.csv")).unwrap();
    let csv_b = std::fs::read(out_b.join("ratesweep.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "repeated runs must produce identical bytes");
    assert!(String::from_utf8(csv_a).unwrap().starts_with("omega_rotation,qfi\n"));

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("ratesweep.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["scenario"], "ratesweep");
    assert_eq!(meta["rows"], 3);
    assert!(meta["errors"].as_array().unwrap().is_empty());
}

#[test]
fn parameter_overrides_change_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CUSTOM);
    let base = dir.path().join("base");
    let bumped = dir.path().join("bumped");
    let r = qomg(&["run", "ratesweep", "--config", &cfg, "--out", &base.to_string_lossy()]);
    assert!(r.status.success());
    let r = qomg(&[
        "run",
        "ratesweep",
        "--config",
        &cfg,
        "--out",
        &bumped.to_string_lossy(),
        "--param",
        "g0_tilde=0.2",
    ]);
    assert!(r.status.success());
    let a = std::fs::read(base.join("ratesweep.csv")).unwrap();
    let b = std::fs::read(bumped.join("ratesweep.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn unknown_config_key_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "omega_q = 1.0\n");
    let out = qomg(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("omega_q"));
}

#[test]
fn unknown_scenario_exits_with_one() {
    let out = qomg(&["run", "nonsense"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_sweep_cells_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
units = "dimensionless"
omega_m = 1.0
omega_rotation = 0.0
chi_tilde = 0.0

[scenario.partial]
engine = "analytic"
sweep = "omega_m"
values = [1.0, 0.0]
time = 3.0
"#,
    );
    let out_dir = dir.path().join("out");
    let out = qomg(&["run", "partial", "--config", &cfg, "--out", &out_dir.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("partial.csv")).unwrap();
    assert!(csv.contains("error:zero_frequency"), "{csv}");
}

#[test]
fn validate_reports_every_scenario_once() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CUSTOM);
    let out = qomg(&["validate", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 11, "{text}");
    assert!(text.contains("ratesweep: ok (3 rows x 1 columns"));
}

#[test]
fn unknown_oracle_suite_exits_with_one() {
    let out = qomg(&["oracle", "nonsense"]);
    assert_eq!(out.status.code(), Some(1));
}
