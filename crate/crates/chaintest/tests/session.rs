//! Whole sessions with the mock provider and the stub runner.

mod common;

use std::path::Path;

use chaintest::config::SessionConfig;
use chaintest::dump::load_model;
use chaintest::report::{build_report, render_json};
use chaintest::session::{generate, plan_focal, FocalRecord, FocalStatus, SessionOptions, SessionSummary};
use chaintest_core::metrics::{render_markdown, SessionReport};
use chaintest_core::prompt::PromptTemplate;
use chaintest_core::TestStatus;
use common::{config_with, fixture, snapshot};

fn run(dump: &str, config: &Path, out: &Path, parallel: usize) -> SessionSummary {
    let model = load_model(&fixture(dump)).unwrap();
    let cfg = SessionConfig::load(config).unwrap();
    generate(&model, cfg, &SessionOptions { parallel, ..Default::default() }, out).unwrap()
}

fn record(out: &Path, name: &str) -> FocalRecord {
    serde_json::from_str(&std::fs::read_to_string(out.join("focal").join(name)).unwrap()).unwrap()
}

#[test]
fn two_clean_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("session/config.json");
    for dump in ["wait.json", "bounds.json"] {
        let a = dir.path().join(format!("a-{dump}"));
        let b = dir.path().join(format!("b-{dump}"));
        run(dump, &cfg, &a, 4);
        run(dump, &cfg, &b, 1);
        let (sa, sb) = (snapshot(&a), snapshot(&b));
        assert!(sa.contains_key("report.md") && sa.contains_key("report.json"));
        assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
        for (k, v) in &sa {
            assert!(v == &sb[k], "{dump}: {k} differs");
        }
    }
}

#[test]
fn wait_session_generates_one_test_per_minimized_path() {
    let dir = tempfile::tempdir().unwrap();
    let s = run("wait.json", &fixture("session/config.json"), dir.path(), 4);
    assert_eq!((s.processed, s.skipped, s.failed, s.truncated), (3, 0, 0, false));

    let wait = record(dir.path(), "imp__wait.json");
    assert_eq!(wait.status, FocalStatus::Completed);
    assert_eq!(wait.minimized, [4, 0, 2]);
    let ids: Vec<_> = wait.artifacts.iter().map(|a| a.path_id).collect();
    assert_eq!(ids, [4, 0, 2]);

    // One repair round turns the pointer into an integer.
    let p4 = &wait.artifacts[0];
    assert_eq!((p4.status, p4.repair_rounds_used), (TestStatus::Passed, 1));
    assert_eq!(p4.source.lines().nth(3).unwrap(), "    let expected_states = head_ptr as usize & STATE_MASK;");

    // Useless change logs: one error, three iterations, then give up.
    let map_addr = record(dir.path(), "imp__strict__map_addr.json");
    let a = &map_addr.artifacts[0];
    assert_eq!((a.status, a.repair_rounds_used), (TestStatus::Unrepairable, 3));
}

#[test]
fn rerun_makes_no_provider_calls() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("session/config.json");
    let first = run("wait.json", &cfg, dir.path(), 4);
    assert!(first.gateway_requests > 0);
    let before = snapshot(dir.path());
    let again = run("wait.json", &cfg, dir.path(), 4);
    assert_eq!((again.processed, again.skipped, again.gateway_requests), (0, 3, 0));
    assert_eq!(snapshot(dir.path()), before);
}

#[test]
fn changed_config_invalidates_records() {
    let dir = tempfile::tempdir().unwrap();
    run("bounds.json", &fixture("session/config.json"), &dir.path().join("s"), 2);
    let cfg = config_with(dir.path(), |v| v["generation"]["max_tests_per_focal"] = 4.into());
    let s = run("bounds.json", &cfg, &dir.path().join("s"), 2);
    assert_eq!((s.processed, s.skipped), (2, 0));
}

#[test]
fn interrupted_session_resumes_to_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("session/config.json");
    let whole = dir.path().join("whole");
    run("wait.json", &cfg, &whole, 4);

    // A kill between focal methods leaves some records missing.
    let cut = dir.path().join("cut");
    run("wait.json", &cfg, &cut, 4);
    std::fs::remove_file(cut.join("focal/imp__strict__addr.json")).unwrap();
    std::fs::remove_dir_all(cut.join("tests/imp__strict__addr")).unwrap();
    std::fs::remove_file(cut.join("report.json")).unwrap();
    let s = run("wait.json", &cfg, &cut, 4);
    assert_eq!((s.processed, s.skipped, s.gateway_requests), (1, 2, 1));
    assert_eq!(snapshot(&cut), snapshot(&whole));
}

#[test]
fn budget_for_one_request_truncates() {
    let dir = tempfile::tempdir().unwrap();
    let model = load_model(&fixture("bounds.json")).unwrap();
    let base = SessionConfig::load(&fixture("session/config.json")).unwrap();
    let plan = plan_focal(model.function("above").unwrap(), &model, &base, &PromptTemplate::default()).unwrap();
    // Usage is charged at its actual size, so what is left after the first
    // call is below any further generation request's worst case.
    let one = plan.tests[0].request.estimated_tokens();
    let cfg = config_with(dir.path(), |v| v["token_budget"] = one.into());

    let out = dir.path().join("s");
    let s = run("bounds.json", &cfg, &out, 1);
    assert!(s.truncated);
    assert_eq!(s.gateway_requests, 1);
    let report: SessionReport = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.truncated);
    assert!(std::fs::read_to_string(out.join("report.md")).unwrap().contains("Session truncated"));
    let above = record(&out, "above.json");
    assert_eq!(above.status, FocalStatus::Truncated);
    assert_eq!(above.artifacts.len(), 1);
    assert!(!out.join("focal/in_range.json").exists());

    // With the budget lifted the session completes and matches a clean run.
    let unlimited = config_with(dir.path(), |_| {});
    let s = run("bounds.json", &unlimited, &out, 1);
    assert!(!s.truncated);
    let clean = dir.path().join("clean");
    run("bounds.json", &unlimited, &clean, 1);
    assert_eq!(snapshot(&out), snapshot(&clean));
}

#[test]
fn tampered_records_mark_rows_invalid() {
    let dir = tempfile::tempdir().unwrap();
    run("wait.json", &fixture("session/config.json"), dir.path(), 4);
    let intact = build_report(dir.path()).unwrap();

    std::fs::write(dir.path().join("tests/imp__wait/p4.rs"), "fn edited() {}\n").unwrap();
    std::fs::write(dir.path().join("focal/imp__strict__addr.json"), "{ \"focal_id\": ").unwrap();
    let r = build_report(dir.path()).unwrap();
    let row = |rep: &SessionReport, scope: &str| rep.rows.iter().find(|r| r.scope == scope).unwrap().clone();

    assert!(row(&r, "imp::wait").invalid.as_deref().unwrap().contains("differs"));
    assert!(row(&r, "imp::strict::addr").invalid.is_some());
    assert_eq!(row(&r, "imp::strict::map_addr"), row(&intact, "imp::strict::map_addr"));
    // The crate row only counts what is still trustworthy.
    assert_eq!(r.rows[0].n_tests, 1);
    let md = render_markdown(&r);
    assert!(md.contains("| imp::wait (invalid) |"));
    assert!(md.contains("Invalid record for imp::strict::addr"));
}

#[test]
fn report_json_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    run("bounds.json", &fixture("session/config.json"), dir.path(), 2);
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let parsed: SessionReport = serde_json::from_str(&text).unwrap();
    assert_eq!(render_json(&parsed), text);
    assert_eq!(parsed, build_report(dir.path()).unwrap());
}

#[test]
fn failed_plan_marks_focal_failed_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    // Three minimized paths do not fit a budget of two tests.
    let cfg = config_with(dir.path(), |v| v["generation"]["max_tests_per_focal"] = 2.into());
    let out = dir.path().join("s");
    let s = run("wait.json", &cfg, &out, 2);
    assert_eq!((s.processed, s.failed), (3, 1));
    let wait = record(&out, "imp__wait.json");
    assert_eq!(wait.status, FocalStatus::Failed);
    assert!(wait.error.unwrap().contains("smaller than the 3 minimized paths"));
    assert_eq!(record(&out, "imp__strict__addr.json").status, FocalStatus::Completed);
}
