//! The `catcher` binary: arguments, exit codes and output locations.

use std::path::{Path, PathBuf};
use std::process::Command;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn catcher() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_catcher"));
    c.env("RUST_LOG", "warn").env_remove("CATCHER_OUT_DIR");
    c
}

#[test]
fn map_mode_succeeds_and_prints_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = catcher()
        .args(["map", "--config"])
        .arg(config_path("fig2_map.cfg"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("chi_s = 0, nu_s = 2 -> chi_f = 0.5, nu_f = 0"), "{stdout}");
    assert!(dir.path().join("map.csv").exists());
    assert!(dir.path().join("manifest.csv").exists());
}

#[test]
fn output_directory_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = catcher()
        .args(["design", "--config"])
        .arg(config_path("design.cfg"))
        .env("CATCHER_OUT_DIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("design.csv").exists());
}

#[test]
fn seed_flag_reaches_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let status = catcher()
        .args(["design", "--seed", "12345", "--config"])
        .arg(config_path("design.cfg"))
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
    assert!(manifest.lines().any(|l| l == "seed,12345"), "{manifest}");
}

#[test]
fn invalid_config_exits_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "mode = \"map\"\n[map]\npoints = [[0.0, -1.0]]\nextra = 3\n").unwrap();
    let out = catcher().args(["map", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error: "), "{stderr}");
}

#[test]
fn missing_config_file_exits_nonzero() {
    let out = catcher()
        .args(["map", "--config", "/nonexistent/run.cfg"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error: "));
}

#[test]
fn unknown_mode_is_a_usage_error() {
    let out = catcher()
        .args(["sweep", "--config"])
        .arg(config_path("fig2_map.cfg"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
