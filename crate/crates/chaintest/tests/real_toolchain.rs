//! A session against a real crate built by cargo, with scripted model
//! replies.

mod common;

use std::path::Path;

use chaintest::config::SessionConfig;
use chaintest::dump::load_model;
use chaintest::session::{generate, FocalRecord, SessionOptions, TestTranscript, Transcript};
use chaintest_core::TestStatus;
use common::fixture;

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap();
        if name == "target" || name == "tests" || name == "Cargo.lock" {
            continue;
        }
        if p.is_dir() {
            copy_dir(&p, &to.join(name));
        } else {
            std::fs::copy(&p, to.join(name)).unwrap();
        }
    }
}

#[test]
fn cargo_builds_repairs_and_runs_generated_tests() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixture("live/bounds"), &dir.path().join("bounds"));
    let text = std::fs::read_to_string(fixture("live/config.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["mock_script"] = fixture("live/mock.json").display().to_string().into();
    v["generation"] = serde_json::json!({ "focal": ["above"] });
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, v.to_string()).unwrap();

    let model = load_model(&fixture("bounds.json")).unwrap();
    let cfg = SessionConfig::load(&cfg_path).unwrap();
    let out = dir.path().join("session");
    let s = generate(&model, cfg, &SessionOptions { parallel: 2, ..Default::default() }, &out).unwrap();
    assert_eq!((s.processed, s.failed), (1, 0));

    let rec: FocalRecord = serde_json::from_str(&std::fs::read_to_string(out.join("focal/above.json")).unwrap()).unwrap();
    let status = |id: &str| rec.artifacts.iter().find(|a| a.test_id == id).unwrap();
    assert_eq!((status("above/p0").status, status("above/p0").repair_rounds_used), (TestStatus::Passed, 1));
    assert_eq!(status("above/p1").status, TestStatus::Passed);
    // The scripted boundary test wrongly expects above(10) to hold.
    assert_eq!(status("above/p0-s0-low").status, TestStatus::Failed);

    let tr: Transcript = serde_json::from_str(&std::fs::read_to_string(out.join("transcripts/above.json")).unwrap()).unwrap();
    let p0: &TestTranscript = &tr.tests[0];
    let first = p0.first_build.iter().find(|d| d.is_error()).unwrap();
    assert_eq!(first.key(), ("E0308".into(), "tests/above__p0.rs".into(), 5));
    assert!(out.join("report.md").is_file());
}
