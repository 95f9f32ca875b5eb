//! Exit codes and outputs of the `chaintest` binary.

mod common;

use std::process::{Command, Output};

use chaintest::analyze::ChainsFile;
use common::fixture;

fn chaintest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaintest")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn analyze_then_minimize_wait() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chains");
    let o = chaintest(&["analyze", fixture("wait.json").to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let chains: ChainsFile =
        serde_json::from_str(&std::fs::read_to_string(out.join("imp__wait.json")).unwrap()).unwrap();
    assert_eq!(chains.paths.len(), 5);

    let min = dir.path().join("min.json");
    let o = chaintest(&["minimize", out.join("imp__wait.json").to_str().unwrap(), "-o", min.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout), "selected paths [4, 0, 2] of 5\n");
    let min: ChainsFile = serde_json::from_str(&std::fs::read_to_string(min).unwrap()).unwrap();
    assert_eq!(min.paths.iter().map(|c| c.path_id).collect::<Vec<_>>(), [4, 0, 2]);
    assert_eq!(min.coverage_ratio, Some(1.0));
}

#[test]
fn empty_dump_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chains");
    let o = chaintest(&["analyze", fixture("empty_dump.json").to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_dir(out).unwrap().count(), 0);
}

#[test]
fn corrupt_dump_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let o = chaintest(&["analyze", fixture("truncated_dump.json").to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("truncated_dump.json:9:"), "{}", stderr(&o));
}

#[test]
fn invalid_dump_lists_issues() {
    let dir = tempfile::tempdir().unwrap();
    let o = chaintest(&["analyze", fixture("invalid_dump.json").to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nonexistent block 9"), "{}", stderr(&o));
}

#[test]
fn generate_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let session = dir.path().join("s");
    let o = chaintest(&[
        "generate",
        fixture("wait.json").to_str().unwrap(),
        "-c",
        fixture("session/config.json").to_str().unwrap(),
        "-o",
        session.to_str().unwrap(),
        "--parallel",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(session.join("report.json").is_file() && session.join("report.md").is_file());

    let o = chaintest(&["report", session.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout), std::fs::read_to_string(session.join("report.json")).unwrap());
}

#[test]
fn generate_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, r#"{ "provider": "http", "endpoint": "http://127.0.0.1:9", "api_key_env": "CHAINTEST_UNSET_KEY" }"#).unwrap();
    let session = dir.path().join("s");
    let o = chaintest(&[
        "generate",
        fixture("bounds.json").to_str().unwrap(),
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        session.to_str().unwrap(),
        "--mock-script",
        fixture("session/mock.json").to_str().unwrap(),
        "--stub-runner",
        fixture("session/stub.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn http_provider_without_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, r#"{ "provider": "http", "endpoint": "http://127.0.0.1:9", "api_key_env": "CHAINTEST_UNSET_KEY" }"#).unwrap();
    let o = chaintest(&[
        "generate",
        fixture("bounds.json").to_str().unwrap(),
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        dir.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("CHAINTEST_UNSET_KEY"));
}

#[test]
fn report_needs_a_session() {
    let dir = tempfile::tempdir().unwrap();
    let o = chaintest(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = chaintest(&["report", dir.path().join("nope").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
