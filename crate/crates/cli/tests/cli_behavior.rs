//! Black-box checks of the `pfv` binary: exit codes, artifact layout,
//! manifest hashing, tolerance overrides, and state-file round trips.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> String {
    config_dir().join(name).to_str().unwrap().to_string()
}

fn pfv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfv")).args(args).output().expect("run pfv")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr_text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn sha256_hex(path: &Path) -> String {
    let bytes = fs::read(path).expect("read artifact");
    let mut h = Sha256::new();
    h.update(&bytes);
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn help_prints_usage_and_exits_zero() {
    let out = pfv(&["--help"]);
    assert_eq!(exit_code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("usage: pfv <command>"));
}

#[test]
fn usage_errors_exit_one() {
    let cfg = config("harmonic_uncoupled.json");
    // Unknown command.
    let out = pfv(&["frobnicate", "--config", &cfg]);
    assert_eq!(exit_code(&out), 1, "stderr: {}", stderr_text(&out));
    // Unknown flag.
    let out = pfv(&["virial-report", "--config", &cfg, "--frob"]);
    assert_eq!(exit_code(&out), 1);
    // Missing required --config.
    let out = pfv(&["virial-report"]);
    assert_eq!(exit_code(&out), 1);
    // Zero threads.
    let out = pfv(&["virial-report", "--config", &cfg, "--threads", "0"]);
    assert_eq!(exit_code(&out), 1);
    // Malformed and unknown tolerance overrides.
    for bad in ["--tol", "nosuch=1.0", "--tol", "electronic=-1", "--tol", "electronic=abc"]
        .chunks(2)
    {
        let out = pfv(&["virial-report", "--config", &cfg, bad[0], bad[1]]);
        assert_eq!(exit_code(&out), 1, "override {:?} accepted", bad[1]);
    }
}

#[test]
fn config_errors_exit_one() {
    // Nonexistent file.
    let out = pfv(&["virial-report", "--config", "/nonexistent/x.json"]);
    assert_eq!(exit_code(&out), 1);
    // Unknown key in the system description.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut text = fs::read_to_string(config_dir().join("harmonic_uncoupled.json")).unwrap();
    text = text.replacen('{', "{\n  \"surprise\": 1,", 1);
    fs::write(&path, text).unwrap();
    let out = pfv(&["virial-report", "--config", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1, "stderr: {}", stderr_text(&out));
}

#[test]
fn passing_report_writes_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = pfv(&[
        "virial-report",
        "--config",
        &config("harmonic_uncoupled.json"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));

    let csv = fs::read_to_string(dir.path().join("virial_report.csv")).unwrap();
    assert!(csv.starts_with("identity,residual,scale,relative,oracle,paper_form_residual,pass"));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("virial_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["all_pass"], serde_json::Value::Bool(true));

    // The manifest must list every artifact with its real content hash.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    let artifacts = manifest["artifacts"].as_array().unwrap();
    let names: Vec<&str> = artifacts.iter().map(|a| a["file"].as_str().unwrap()).collect();
    assert!(names.contains(&"virial_report.json"));
    assert!(names.contains(&"virial_report.csv"));
    for a in artifacts {
        let file = a["file"].as_str().unwrap();
        let recorded = a["sha256"].as_str().unwrap();
        assert_eq!(recorded, sha256_hex(&dir.path().join(file)), "hash of {file}");
    }
    assert!(manifest["timestamp_unix"].as_u64().unwrap() > 0);
}

#[test]
fn failing_report_exits_two_and_tol_override_rescues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("coupled_truncation_starved.json");
    let out = pfv(&["virial-report", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2, "stderr: {}", stderr_text(&out));

    // Loosening the three starved identities turns the run green.
    let dir2 = tempfile::tempdir().unwrap();
    let out = pfv(&[
        "virial-report",
        "--config",
        &cfg,
        "--out",
        dir2.path().to_str().unwrap(),
        "--tol",
        "field_mode=1e-1",
        "--tol",
        "mixed=1e-1",
        "--tol",
        "combined=1e-1",
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));

    // The override is recorded in the manifest.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir2.path().join("manifest.json")).unwrap())
            .unwrap();
    let overrides = manifest["tol_overrides"].as_array().unwrap();
    assert_eq!(overrides.len(), 3);
    assert!(overrides.iter().any(|o| o["name"] == "field_mode"));
}

#[test]
fn solve_writes_a_loadable_state() {
    use pfv_core::spec::SystemSpec;
    use pfv_core::stateio::load_state;

    let dir = tempfile::tempdir().unwrap();
    let cfg_path = config("harmonic_uncoupled.json");
    let out = pfv(&["solve", "--config", &cfg_path, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));

    let spec = SystemSpec::from_json_str(&fs::read_to_string(&cfg_path).unwrap()).unwrap();
    let coeffs = load_state(dir.path().join("state.pfvw"), &spec).expect("state loads");
    assert_eq!(coeffs.len(), 201);
    let norm: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    assert!((norm - 1.0).abs() < 1e-12, "norm {norm}");

    let bd: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("breakdown.json")).unwrap())
            .unwrap();
    let kinetic = bd["kinetic"].as_f64().unwrap();
    assert!((kinetic - 0.25).abs() < 1e-3, "kinetic {kinetic}");

    // A state saved for one system must not load for another.
    let other = SystemSpec::from_json_str(
        &fs::read_to_string(config("softcoulomb_pair.json")).unwrap(),
    )
    .unwrap();
    let err = load_state(dir.path().join("state.pfvw"), &other).unwrap_err();
    assert!(err.to_string().contains("hash mismatch"), "err: {err}");
}

#[test]
fn mean_field_solve_is_not_gated_on_the_eigenstate_residual() {
    let dir = tempfile::tempdir().unwrap();
    let out = pfv(&[
        "solve",
        "--config",
        &config("coupled_classical_weak.json"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));
    assert!(stderr_text(&out).contains("factorized state"));
}

#[test]
fn mass_renorm_artifact_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = pfv(&[
        "mass-renorm",
        "--config",
        &config("freespace_lambda_c.json"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));

    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("mass_renorm.json")).unwrap())
            .unwrap();
    let mu = v["mu_continuum"].as_f64().unwrap();
    let expected = 4.0 / (3.0 * std::f64::consts::PI * 137.036);
    assert!((mu / expected - 1.0).abs() < 1e-14, "mu_continuum {mu}");
    assert!(v["mode_count"].as_u64().unwrap() > 0);
    assert_eq!(v["mode_count"].as_u64().unwrap() % 2, 0, "two polarizations per point");
}
