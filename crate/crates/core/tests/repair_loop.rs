use std::cell::{Cell, RefCell};

use chaintest_core::build::{BuildError, BuildOutcome, Compiler, Diagnostic, Severity};
use chaintest_core::llm::{ChatModel, ChatRequest, ChatResponse, GatewayError};
use chaintest_core::repair::{repair_test, RepairBudget};
use chaintest_core::{TestArtifact, TestKind, TestStatus};
use proptest::prelude::*;

const PTR_MASK: &str = include_str!("../../../fixtures/ptr_mask_test.rs");

fn artifact(source: &str) -> TestArtifact {
    TestArtifact {
        test_id: "imp::wait/p4".into(),
        focal_id: "imp::wait".into(),
        path_id: 4,
        kind: TestKind::Path,
        step: None,
        source: source.into(),
        status: TestStatus::Generated,
        repair_rounds_used: 0,
        tokens_in: 0,
        tokens_out: 0,
        cause: None,
    }
}

struct FnCompiler<F>(F, u32);

impl<F: FnMut(&str) -> Vec<Diagnostic>> Compiler for FnCompiler<F> {
    fn compile(&mut self, _file: &str, source: &str) -> Result<BuildOutcome, BuildError> {
        self.1 += 1;
        let d = (self.0)(source);
        Ok(if d.is_empty() { BuildOutcome::ok(0) } else { BuildOutcome::failed(d, 0) })
    }
}

struct FnModel<F> {
    f: RefCell<F>,
    calls: Cell<u32>,
}

impl<F: FnMut(&ChatRequest) -> Result<String, GatewayError>> ChatModel for FnModel<F> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.calls.set(self.calls.get() + 1);
        let text = (self.f.borrow_mut())(req)?;
        Ok(ChatResponse { text, input_tokens: 7, output_tokens: 3, provider_id: "fn".into() })
    }
}

fn model<F: FnMut(&ChatRequest) -> Result<String, GatewayError>>(f: F) -> FnModel<F> {
    FnModel { f: RefCell::new(f), calls: Cell::new(0) }
}

fn e0369() -> Diagnostic {
    Diagnostic {
        code: "E0369".into(),
        message: "no implementation for `*mut imp::Waiter & usize`".into(),
        file: "tests/wait_p4.rs".into(),
        line: 4,
        column: 27,
        level: Severity::Error,
    }
}

fn ptr_mask_compiler(source: &str) -> Vec<Diagnostic> {
    if source.contains("head_ptr as usize & STATE_MASK") { vec![] } else { vec![e0369()] }
}

const FIX: &str = "LINE: 4\nORIGINAL:\n    let expected_states = head_ptr & STATE_MASK;\nREPLACEMENT:\n    let expected_states = head_ptr as usize & STATE_MASK;\nEND\n";

#[test]
fn ptr_mask_is_fixed_in_one_round() {
    let m = model(|req| {
        assert!(req.user.contains("error[E0369]"));
        assert!(req.user.contains("4 |     let expected_states = head_ptr & STATE_MASK;"));
        Ok(FIX.to_string())
    });
    let mut c = FnCompiler(ptr_mask_compiler, 0);
    let out = repair_test(artifact(PTR_MASK), BuildOutcome::failed(vec![e0369()], 0), "t.rs", &mut c, &m, RepairBudget::default());
    assert_eq!(out.artifact.status, TestStatus::Compiled);
    assert_eq!(out.artifact.repair_rounds_used, 1);
    assert_eq!(m.calls.get(), 1);
    assert_eq!(out.artifact.source.lines().nth(3), Some("    let expected_states = head_ptr as usize & STATE_MASK;"));
    assert_eq!((out.artifact.tokens_in, out.artifact.tokens_out), (7, 3));
}

#[test]
fn no_op_logs_give_up_after_three_iterations() {
    let noop = "LINE: 4\nORIGINAL:\n    let expected_states = head_ptr & STATE_MASK;\nREPLACEMENT:\n    let expected_states = head_ptr & STATE_MASK;\nEND\n";
    let m = model(|_| Ok(noop.to_string()));
    let mut c = FnCompiler(ptr_mask_compiler, 0);
    let out = repair_test(artifact(PTR_MASK), BuildOutcome::failed(vec![e0369()], 0), "t.rs", &mut c, &m, RepairBudget::default());
    assert_eq!(out.artifact.status, TestStatus::Unrepairable);
    assert_eq!(m.calls.get(), 3);
    assert_eq!(out.artifact.repair_rounds_used, 3);
    assert_eq!(out.artifact.source, PTR_MASK);
}

/// One error per line containing `BROKEN`.
fn broken_lines(source: &str) -> Vec<Diagnostic> {
    source
        .lines()
        .enumerate()
        .filter(|(_, l)| l.contains("BROKEN"))
        .map(|(i, _)| Diagnostic { code: "E0425".into(), message: "cannot find value".into(), file: "t.rs".into(), line: i as u32 + 1, column: 5, level: Severity::Error })
        .collect()
}

fn fix_reported_line(req: &ChatRequest) -> Result<String, GatewayError> {
    let line: u32 = req.user.split("error occurs at line ").nth(1).unwrap().split('.').next().unwrap().parse().unwrap();
    let prefix = format!("{line} | ");
    let original = req.user.lines().find_map(|l| l.strip_prefix(&prefix)).unwrap();
    Ok(format!("LINE: {line}\nORIGINAL:\n{original}\nREPLACEMENT:\n{}\nEND", original.replace("BROKEN", "FIXED")))
}

#[test]
fn eleventh_error_exceeds_the_error_budget() {
    let src: String = (0..11).map(|i| format!("    let v{i} = BROKEN;\n")).collect();
    let m = model(fix_reported_line);
    let mut c = FnCompiler(broken_lines, 0);
    let first = BuildOutcome::failed(broken_lines(&src), 0);
    let out = repair_test(artifact(&src), first, "t.rs", &mut c, &m, RepairBudget::default());
    assert_eq!(out.artifact.status, TestStatus::Unrepairable);
    assert_eq!(m.calls.get(), 10);
    assert_eq!(out.artifact.source.matches("FIXED").count(), 10);
    assert_eq!(out.artifact.source.lines().last(), Some("    let v10 = BROKEN;"));
}

#[test]
fn gateway_failure_is_a_cause() {
    let m = model(|_| Err(GatewayError::ProviderUnavailable { attempts: 5, last: "503".into() }));
    let mut c = FnCompiler(ptr_mask_compiler, 0);
    let out = repair_test(artifact(PTR_MASK), BuildOutcome::failed(vec![e0369()], 0), "t.rs", &mut c, &m, RepairBudget::default());
    assert_eq!(out.artifact.status, TestStatus::Unrepairable);
    assert!(out.artifact.cause.unwrap().contains("gateway"));
    assert_eq!(out.artifact.repair_rounds_used, 1);
}

proptest! {
    /// Whatever the model says and whatever the compiler reports, the loop
    /// makes at most E * I calls and counts every one of them.
    #[test]
    fn calls_are_bounded(
        replies in prop::collection::vec(0usize..4, 1..40),
        errors in prop::collection::vec(1u32..15, 1..40),
        e in 1u32..12,
        i in 1u32..4,
    ) {
        let pool = [
            String::new(),
            "LINE: 1\nORIGINAL:\nline\nREPLACEMENT:\nother\nEND".to_string(),
            "prose".to_string(),
            "LINE: 2\nORIGINAL:\nline\nREPLACEMENT:\nline2\nEND".to_string(),
        ];
        let mut k = 0;
        let m = model(|_| { k += 1; Ok(pool[replies[k % replies.len()]].clone()) });
        let mut n = 0;
        let mut c = FnCompiler(|_: &str| {
            n += 1;
            let line = errors[n % errors.len()];
            vec![Diagnostic { code: "E1".into(), message: String::new(), file: "t.rs".into(), line, column: 1, level: Severity::Error }]
        }, 0);
        let src = "line\nline\nline\n";
        let first = BuildOutcome::failed(vec![Diagnostic { code: "E1".into(), message: String::new(), file: "t.rs".into(), line: 1, column: 1, level: Severity::Error }], 0);
        let out = repair_test(artifact(src), first, "t.rs", &mut c, &m, RepairBudget { max_errors: e, max_iterations: i });
        prop_assert!(m.calls.get() <= e * i);
        prop_assert_eq!(out.artifact.repair_rounds_used, m.calls.get());
        prop_assert_eq!(out.exchanges.len() as u32, m.calls.get());
        prop_assert_eq!(out.artifact.status, TestStatus::Unrepairable);
    }
}
