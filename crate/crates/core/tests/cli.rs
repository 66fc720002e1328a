//! End-to-end smoke tests through the installed binary: exit codes, artifact
//! layout, determinism, and resume behavior as a user would hit them.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fanocollapse"))
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(
        &path,
        r#"{
  "schema_version": 1,
  "spec": { "model": "product", "kappa": 1.0 },
  "mesh": { "npoints": 48 },
  "schedule": { "explicit": [0.5, 1.0, 1.5, 2.0] },
  "solver": { "tol": 1e-10, "max_iter": 50 },
  "gauge": 4.0,
  "outputs": { "directory": "unused", "formats": ["csv", "json"] }
}
"#,
    )
    .unwrap();
    path
}

#[test]
fn run_then_report_produces_the_full_artifact_set() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out_dir = tmp.path().join("run");

    let run = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .arg("--seed")
        .arg("11")
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("marched 4 slices"), "{stdout}");

    for name in [
        "config.json",
        "diagnostics.csv",
        "phi_snapshots.csv",
        "limit_data.json",
        "manifest.json",
    ] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let header = fs::read_to_string(out_dir.join("diagnostics.csv"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert!(header.starts_with("t,sup_phi,inf_phi,"), "{header}");

    let report = bin().arg("report").arg(&out_dir).output().unwrap();
    assert!(report.status.success());
    assert!(out_dir.join("report.md").exists());
    assert!(out_dir.join("plots").read_dir().unwrap().count() >= 19);
}

#[test]
fn identical_runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let (d1, d2) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&d1, &d2] {
        let out = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(d)
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    assert_eq!(
        fs::read(d1.join("diagnostics.csv")).unwrap(),
        fs::read(d2.join("diagnostics.csv")).unwrap()
    );
    assert_eq!(
        fs::read(d1.join("phi_snapshots.csv")).unwrap(),
        fs::read(d2.join("phi_snapshots.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(
        &path,
        r#"{
  "schema_version": 1,
  "spec": { "model": "hirzebruch", "a": 1, "b0": 4.0, "binf": 4.0, "kappa": 1.0 },
  "mesh": { "npoints": 48 },
  "schedule": { "explicit": [0.5, 1.0] },
  "solver": { "tol": 1e-10, "max_iter": 50 },
  "gauge": 1.0,
  "outputs": { "directory": "unused", "formats": ["csv"] }
}
"#,
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(tmp.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("moment interval"));
}

#[test]
fn unknown_config_keys_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(
        &path,
        r#"{ "schema_version": 1, "unexpected": true }"#,
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failures_exit_1_and_leave_an_error_record() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("hard.json");
    fs::write(
        &path,
        r#"{
  "schema_version": 1,
  "spec": { "model": "product", "kappa": 1.0 },
  "mesh": { "npoints": 48 },
  "schedule": { "explicit": [3.0, 4.0] },
  "solver": { "tol": 1e-10, "max_iter": 1 },
  "gauge": 4.0,
  "outputs": { "directory": "unused", "formats": ["csv"] }
}
"#,
    )
    .unwrap();
    let dir = tmp.path().join("run");
    let out = bin()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.join("error.json").exists());
}

#[test]
fn unknown_suite_exits_2() {
    let out = bin().args(["verify", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn study_rejects_short_resolution_lists() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = bin()
        .args(["study", "--resolutions", "32,64", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn study_passes_on_the_product_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = bin()
        .args(["study", "--resolutions", "32,48,64", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("PASS"), "{stdout}");
    assert!(stdout.contains("closed-form error"), "{stdout}");
}

#[test]
fn report_without_a_manifest_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().arg("report").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest"));
}
