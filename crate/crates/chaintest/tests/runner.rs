//! Toolchain adapters: the stub, the shell command runner and the parsers
//! behind them.

mod common;

use std::path::Path;

use chaintest::config::RunnerConfig;
use chaintest::runner::{coverage, CommandRunner, CoverageFailure, Runner, RunnerCompiler, StubRunner, StubScript};
use chaintest_core::build::{BuildError, CoverageError, CoverageOutcome, RunStatus};
use chaintest_core::llm::{ChatModel, ChatRequest, ChatResponse, GatewayError};
use chaintest_core::metrics::{aggregate, render_markdown};
use chaintest_core::repair::{repair_test, RepairBudget};
use chaintest_core::{TestArtifact, TestKind, TestStatus};
use common::{fixture, golden};

fn stub(json: &str) -> StubRunner {
    StubRunner::new(serde_json::from_str::<StubScript>(json).unwrap(), 60).unwrap()
}

#[test]
fn stub_compile_outcomes() {
    let r = stub(r#"{ "tests": {
        "ok.rs": {},
        "ptr_mask.rs": { "diagnostics": [ { "code": "E0369", "line": 4, "column": 27 } ] },
        "bad.rs": { "malformed": true } } }"#);
    let ok = r.compile("ok.rs", "").unwrap();
    assert!(ok.success && ok.diagnostics.is_empty());

    let ptr_mask = r.compile("ptr_mask.rs", "").unwrap();
    assert!(!ptr_mask.success);
    assert_eq!(ptr_mask.diagnostics.len(), 1);
    assert_eq!((ptr_mask.diagnostics[0].line, ptr_mask.diagnostics[0].column), (4, 27));

    let bad = r.compile("bad.rs", "").unwrap();
    assert!(!bad.success && bad.diagnostics.is_empty());
    assert!(bad.raw.is_some() && bad.parse_error.is_some());
}

#[test]
fn stub_run_outcomes() {
    let r = stub(r#"{ "tests": {
        "four.rs": { "results": [
            { "name": "a", "status": "passed" }, { "name": "b", "status": "passed" },
            { "name": "c", "status": "passed" }, { "name": "d", "status": "failed" } ] },
        "none.rs": { "results": [] },
        "slow.rs": { "delay_ms": 61000 } },
      "coverage": { "lines_covered": 93, "lines_total": 100, "branches_covered": 45, "branches_total": 60 } }"#);
    assert_eq!(r.run_tests("four").unwrap().pass_ratio(), Some(0.75));
    assert!(r.run_tests("none").unwrap().results.is_empty());
    assert_eq!(r.run_tests("slow").unwrap().results[0].status, RunStatus::TimedOut);
    let cov = r.measure_coverage().unwrap();
    assert_eq!((cov.line_ratio(), cov.branch_ratio()), (Some(0.93), Some(0.75)));

    let empty = stub(r#"{ "coverage": { "lines_covered": 0, "lines_total": 0, "branches_covered": 0, "branches_total": 0 } }"#);
    assert_eq!(empty.measure_coverage(), Err(CoverageFailure::Invalid(CoverageError::EmptyTarget)));
}

#[test]
fn recorded_coverage_summaries() {
    let llvm = coverage::parse(&std::fs::read_to_string(fixture("coverage/llvm_cov_export.json")).unwrap()).unwrap();
    assert_eq!(llvm, CoverageOutcome { lines_covered: 308, lines_total: 412, branches_covered: 45, branches_total: 60 });
    let lcov = coverage::parse(&std::fs::read_to_string(fixture("coverage/lcov.info")).unwrap()).unwrap();
    assert_eq!(lcov, CoverageOutcome { lines_covered: 4, lines_total: 5, branches_covered: 1, branches_total: 2 });
}

const E0369: &str = r#"{"reason":"compiler-message","message":{"message":"no implementation for `*mut Waiter & usize`","code":{"code":"E0369"},"level":"error","spans":[{"file_name":"tests/ptr_mask.rs","line_start":4,"column_start":27,"is_primary":true}]}}
{"reason":"compiler-message","message":{"message":"aborting due to 1 previous error","code":null,"level":"error","spans":[]}}"#;

/// A crate directory whose "toolchain" is a handful of shell commands.
fn shell_workspace(dir: &Path) -> RunnerConfig {
    std::fs::write(dir.join("e0369.jsonl"), format!("{E0369}\n")).unwrap();
    std::fs::copy(fixture("coverage/lcov.info"), dir.join("lcov.info")).unwrap();
    RunnerConfig {
        workspace: Some(dir.to_path_buf()),
        compile_cmd: "if grep -q 'as usize' {test_file}; then echo '{\"reason\":\"build-finished\",\"success\":true}'; \
                      else cat e0369.jsonl; exit 101; fi"
            .into(),
        test_cmd: "if [ {filter} = slow ]; then sleep 5; fi; \
                   printf 'running 1 test\\ntest {filter} ... ok\\n\\ntest result: ok. 1 passed\\n'"
            .into(),
        coverage_cmd: "cat lcov.info".into(),
        test_timeout_s: 1,
        ..RunnerConfig::default()
    }
}

#[test]
fn command_runner_compiles_runs_and_measures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shell_workspace(dir.path());
    let r = CommandRunner::new(dir.path().to_path_buf(), cfg);
    let src = std::fs::read_to_string(fixture("ptr_mask_test.rs")).unwrap();

    let out = r.compile("ptr_mask.rs", &src).unwrap();
    assert!(!out.success);
    assert_eq!(out.diagnostics.len(), 1);
    assert_eq!(out.diagnostics[0].key(), ("E0369".into(), "tests/ptr_mask.rs".into(), 4));
    assert_eq!(std::fs::read_to_string(dir.path().join("tests/ptr_mask.rs")).unwrap(), src);

    let fixed = src.replace("head_ptr & STATE_MASK", "head_ptr as usize & STATE_MASK");
    assert!(r.compile("ptr_mask.rs", &fixed).unwrap().success);
    let run = r.run_tests("ptr_mask").unwrap();
    assert_eq!(run.results.len(), 1);
    assert_eq!(run.results[0].status, RunStatus::Passed);
    assert_eq!(r.run_tests("slow").unwrap().results[0].status, RunStatus::TimedOut);
    assert_eq!(r.measure_coverage().unwrap().lines_total, 5);

    r.discard("ptr_mask.rs").unwrap();
    assert!(!dir.path().join("tests/ptr_mask.rs").exists());
}

#[test]
fn command_runner_failures() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = shell_workspace(dir.path());
    cfg.compile_cmd = "no-such-toolchain-binary build".into();
    cfg.coverage_cmd = String::new();
    let r = CommandRunner::new(dir.path().to_path_buf(), cfg.clone());
    assert!(matches!(r.compile("t.rs", ""), Err(BuildError::ToolchainMissing(_))));
    assert!(matches!(r.measure_coverage(), Err(CoverageFailure::ToolMissing(_))));

    cfg.compile_cmd = "echo 'error: linker failed'; exit 1".into();
    let r = CommandRunner::new(dir.path().to_path_buf(), cfg.clone());
    let out = r.compile("t.rs", "").unwrap();
    assert!(!out.success);
    assert_eq!(out.raw.as_deref(), Some("error: linker failed\n"));
    assert!(out.parse_error.is_some());

    cfg.compile_cmd = "sleep 5".into();
    cfg.build_timeout_s = 1;
    let r = CommandRunner::new(dir.path().to_path_buf(), cfg);
    assert_eq!(r.compile("t.rs", ""), Err(BuildError::Timeout(1)));
}

struct Fixer;

impl ChatModel for Fixer {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        assert!(req.user.contains("error[E0369]"));
        Ok(ChatResponse {
            text: "LINE: 4\nORIGINAL:\n    let expected_states = head_ptr & STATE_MASK;\nREPLACEMENT:\n    let expected_states = head_ptr as usize & STATE_MASK;\nEND\n".into(),
            input_tokens: 10,
            output_tokens: 10,
            provider_id: "fixer".into(),
        })
    }
}

#[test]
fn repair_through_the_shell_toolchain() {
    let dir = tempfile::tempdir().unwrap();
    let r = CommandRunner::new(dir.path().to_path_buf(), shell_workspace(dir.path()));
    let src = std::fs::read_to_string(fixture("ptr_mask_test.rs")).unwrap();
    let first = r.compile("ptr_mask.rs", &src).unwrap();
    let test = TestArtifact {
        test_id: "imp::wait/p4".into(),
        focal_id: "imp::wait".into(),
        path_id: 4,
        kind: TestKind::Path,
        step: None,
        source: src,
        status: TestStatus::Generated,
        repair_rounds_used: 0,
        tokens_in: 0,
        tokens_out: 0,
        cause: None,
    };
    let out = repair_test(test, first, "ptr_mask.rs", &mut RunnerCompiler(&r), &Fixer, RepairBudget::default());
    assert_eq!((out.artifact.status, out.artifact.repair_rounds_used), (TestStatus::Compiled, 1));
    assert!(std::fs::read_to_string(dir.path().join("tests/ptr_mask.rs")).unwrap().contains("head_ptr as usize"));
}

#[test]
fn one_row_markdown_report() {
    let artifacts: Vec<TestArtifact> = (0..4u32)
        .map(|i| TestArtifact {
            test_id: format!("base64/p{i}"),
            focal_id: "base64::decode".into(),
            path_id: i,
            kind: TestKind::Path,
            step: None,
            source: String::new(),
            status: [TestStatus::Passed, TestStatus::Passed, TestStatus::Failed, TestStatus::Unrepairable][i as usize],
            repair_rounds_used: i,
            tokens_in: 500,
            tokens_out: 120,
            cause: None,
        })
        .collect();
    let cov = CoverageOutcome { lines_covered: 308, lines_total: 412, branches_covered: 45, branches_total: 60 };
    let mut report = aggregate("base64", &artifacts, Some(&cov));
    report.rows.truncate(1);
    golden("one_row_report.md", &render_markdown(&report));
}
