//! Test planning and generation prompts.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::context::{render_focal_context, render_test_context, FocalContext};
use crate::llm::{ChatRequest, GENERATION_TEMPERATURE};
use crate::model::{ConditionChain, ConditionShape, FocalMethod, TestKind};
use crate::shape::{classify, BoundSide, Classification};

pub const DEFAULT_TEMPLATE: &str = include_str!("../templates/generate_v1.txt");

pub const SYSTEM_PREAMBLE: &str = "You write unit tests for Rust code. Reply with Rust source only.";

const ROLE: &str = "You are acting as a software testing expert for the Rust programming language.";

const TASK: &str = "\
Now, please generate test functions based on the following guidelines:
1. Write one test function that drives the focal method along the execution path given by the condition chain.
2. Choose inputs and state so that each listed condition evaluates to the stated outcome, in the listed order.
3. Use only items shown in the code context, and add the use statements the test needs.
4. Check the observable result with assertions.
Please provide the code in plain text format, without explanations.";

const SLOTS: [&str; 6] = ["role", "task", "chain", "focal_context", "focal_method", "test_context"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub path_id: u32,
    pub kind: TestKind,
    /// Index into the chain's steps of the targeted condition (boundary
    /// entries only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestPlan {
    pub focal_id: String,
    pub entries: Vec<PlanEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("test budget {budget} is smaller than the {paths} minimized paths")]
    BudgetTooSmall { budget: usize, paths: usize },
}

/// Boundary entries a step calls for: one for a single bound, two for a
/// range, none otherwise.
pub fn boundary_kinds(shape: ConditionShape, condition: &str) -> Vec<TestKind> {
    match shape {
        ConditionShape::SingleBoundary => match classify(condition) {
            Classification::Single(b) if b.side == BoundSide::Upper => alloc::vec![TestKind::BoundaryHigh],
            _ => alloc::vec![TestKind::BoundaryLow],
        },
        ConditionShape::RangeBased => alloc::vec![TestKind::BoundaryLow, TestKind::BoundaryHigh],
        ConditionShape::Other => Vec::new(),
    }
}

/// One path test per minimized chain, then boundary tests in path order for
/// as long as `budget_tests` allows.
pub fn plan_tests(focal_id: &str, minimized: &[ConditionChain], budget_tests: usize) -> Result<TestPlan, PlanError> {
    if budget_tests < minimized.len() {
        return Err(PlanError::BudgetTooSmall { budget: budget_tests, paths: minimized.len() });
    }
    let mut entries: Vec<PlanEntry> =
        minimized.iter().map(|c| PlanEntry { path_id: c.path_id, kind: TestKind::Path, step: None }).collect();
    'paths: for chain in minimized {
        for (i, step) in chain.steps.iter().enumerate() {
            for kind in boundary_kinds(step.shape, &step.condition) {
                if entries.len() == budget_tests {
                    break 'paths;
                }
                entries.push(PlanEntry { path_id: chain.path_id, kind, step: Some(i) });
            }
        }
    }
    Ok(TestPlan { focal_id: focal_id.to_string(), entries })
}

/// Condition chain as numbered `<condition> == <outcome>` lines followed by
/// the return descriptor.
pub fn render_chain(chain: &ConditionChain) -> String {
    let mut out = String::new();
    for (i, s) in chain.steps.iter().enumerate() {
        let _ = write!(out, "{}. {} == {}", i + 1, s.condition, s.outcome);
        if s.loop_terminating {
            out.push_str(" (loop-terminating)");
        }
        out.push('\n');
    }
    let _ = write!(out, "returns: {}", chain.return_descriptor);
    out
}

/// Expression a boundary entry targets.
pub fn boundary_expr(condition: &str, kind: TestKind) -> String {
    match classify(condition) {
        Classification::Single(b) => b.text,
        Classification::Range { lower, upper } => match kind {
            TestKind::BoundaryHigh => upper.text,
            _ => lower.text,
        },
        Classification::Other => condition.trim().to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("prompt template lacks slot(s): {0}")]
    MissingSlots(String),
}

/// Prompt template with `{role}{task}{chain}{focal_context}{focal_method}{test_context}` slots.
///
/// Substitution is a single pass; slot values are never rescanned, so code
/// containing braces is safe. A line consisting of nothing but a slot whose
/// value is empty disappears, together with the blank line after it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate { text: DEFAULT_TEMPLATE.to_string() }
    }
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let missing: Vec<&str> = SLOTS.iter().copied().filter(|s| !text.contains(&format!("{{{s}}}"))).collect();
        if !missing.is_empty() {
            return Err(TemplateError::MissingSlots(missing.join(", ")));
        }
        Ok(PromptTemplate { text: text.to_string() })
    }

    pub fn render(&self, values: &[(&str, &str); 6]) -> String {
        let lookup = |name: &str| values.iter().find(|(k, _)| *k == name).map(|(_, v)| *v);
        let mut out = String::new();
        let mut skip_blank = false;
        for line in self.text.lines() {
            if skip_blank {
                skip_blank = false;
                if line.trim().is_empty() {
                    continue;
                }
            }
            let t = line.trim();
            if let Some(name) = t.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
                if lookup(name) == Some("") {
                    skip_blank = true;
                    continue;
                }
            }
            substitute_line(&mut out, line, &lookup);
            out.push('\n');
        }
        let trimmed = out.trim_end().len();
        out.truncate(trimmed);
        out.push('\n');
        out
    }
}

fn substitute_line<'a>(out: &mut String, line: &str, lookup: &dyn Fn(&str) -> Option<&'a str>) {
    let mut rest = line;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}').map(|close| (close, &after[..close])) {
            Some((close, name)) if lookup(name).is_some() => {
                out.push_str(lookup(name).unwrap_or_default());
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub focal_id: String,
    pub path_id: u32,
    pub kind: TestKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub system_preamble: String,
    pub user_message: String,
    pub expected_artifact: String,
}

impl PromptBundle {
    pub fn request(&self, max_output_tokens: u32, request_tag: String) -> ChatRequest {
        ChatRequest {
            system: self.system_preamble.clone(),
            user: self.user_message.clone(),
            max_output_tokens,
            temperature: GENERATION_TEMPERATURE,
            request_tag,
        }
    }
}

pub fn build_prompt(
    entry: &PlanEntry,
    chain: &ConditionChain,
    ctx: &FocalContext,
    focal: &FocalMethod,
    template: &PromptTemplate,
) -> PromptBundle {
    let mut task = String::from(TASK);
    if let Some(step) = entry.step.and_then(|i| chain.steps.get(i)) {
        if entry.kind != TestKind::Path {
            let expr = boundary_expr(&step.condition, entry.kind);
            let _ = write!(
                task,
                "\nAlso exercise condition {} at the boundary value of {}, using inputs just on either side of the bound.",
                entry.step.unwrap_or(0) + 1,
                expr
            );
        }
    }
    let chain_text = render_chain(chain);
    let focal_context = render_focal_context(ctx);
    let focal_method = focal.source_text();
    let test_context = if ctx.test_context.is_empty() {
        String::new()
    } else {
        format!("// test context\n{}", render_test_context(ctx))
    };
    let user_message = template.render(&[
        ("role", ROLE),
        ("task", &task),
        ("chain", &chain_text),
        ("focal_context", &focal_context),
        ("focal_method", &focal_method),
        ("test_context", &test_context),
    ]);
    PromptBundle {
        focal_id: focal.id.clone(),
        path_id: chain.path_id,
        kind: entry.kind,
        step: entry.step,
        system_preamble: SYSTEM_PREAMBLE.to_string(),
        user_message,
        expected_artifact: "test_function".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::ContextRefs;
    use crate::model::{ConditionStep, ControlFlowGraph, Outcome};
    use alloc::vec;

    fn step(cond: &str, outcome: bool, occ: u32) -> ConditionStep {
        ConditionStep {
            site: 1,
            occurrence: occ,
            outcome: Outcome::Bool(outcome),
            loop_terminating: occ == 2,
            condition: cond.into(),
            shape: classify(cond).shape(),
        }
    }

    fn chain(id: u32, steps: Vec<ConditionStep>) -> ConditionChain {
        ConditionChain { path_id: id, steps, return_descriptor: "unit".into() }
    }

    fn focal() -> FocalMethod {
        FocalMethod {
            id: "f".into(),
            name: "f".into(),
            signature: "fn f(x: i32) -> bool".into(),
            body: "{ x > 10 }".into(),
            file_path: "src/lib.rs".into(),
            container: None,
            cfg: ControlFlowGraph { entry: 0, exits: vec![0], blocks: vec![], declared_back_edges: None },
            context_refs: ContextRefs::default(),
        }
    }

    #[test]
    fn plan_without_bounds() {
        let paths = [chain(0, vec![step("a.is_empty()", true, 1)]), chain(1, vec![]), chain(2, vec![])];
        let plan = plan_tests("f", &paths, 10).unwrap();
        assert_eq!(plan.entries.len(), 3);
        assert!(plan.entries.iter().all(|e| e.kind == TestKind::Path));
    }

    #[test]
    fn range_gets_two_boundary_entries() {
        let paths = [chain(0, vec![step("x >= 0 && x <= 10", true, 1)])];
        let kinds: Vec<_> = plan_tests("f", &paths, 3).unwrap().entries.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, [TestKind::Path, TestKind::BoundaryLow, TestKind::BoundaryHigh]);
    }

    #[test]
    fn budget_truncates_boundaries() {
        let paths = [chain(0, vec![step("x > 10", true, 1)]), chain(1, vec![step("x > 10", false, 1)])];
        let plan = plan_tests("f", &paths, 2).unwrap();
        assert_eq!(plan.entries.iter().filter(|e| e.kind == TestKind::Path).count(), 2);
        assert_eq!(plan.entries.len(), 2);
        assert_eq!(plan_tests("f", &paths, 1), Err(PlanError::BudgetTooSmall { budget: 1, paths: 2 }));
    }

    #[test]
    fn upper_single_bound_is_high() {
        assert_eq!(boundary_kinds(ConditionShape::SingleBoundary, "n <= MAX"), [TestKind::BoundaryHigh]);
        assert_eq!(boundary_kinds(ConditionShape::SingleBoundary, "x > 10"), [TestKind::BoundaryLow]);
    }

    #[test]
    fn chain_rendering() {
        assert_eq!(render_chain(&chain(0, vec![])), "returns: unit");
        let c = chain(1, vec![step("ready", true, 1), step("ready", false, 2)]);
        assert_eq!(render_chain(&c), "1. ready == true\n2. ready == false (loop-terminating)\nreturns: unit");
    }

    #[test]
    fn prompt_has_required_fragments_and_skips_empty_context() {
        let c = chain(0, vec![step("x > 10", true, 1)]);
        let entry = PlanEntry { path_id: 0, kind: TestKind::Path, step: None };
        let p = build_prompt(&entry, &c, &FocalContext::default(), &focal(), &PromptTemplate::default());
        for frag in [
            "as a software testing expert",
            "please generate test functions based on the following guidelines:",
            "provide the code in plain text format",
            "without explanations.",
        ] {
            assert!(p.user_message.contains(frag), "{frag}");
        }
        assert!(p.user_message.contains("Code context:\nfn f(x: i32) -> bool { x > 10 }\n"));
        assert!(p.user_message.ends_with("{ x > 10 }\n"));
        assert!(!p.user_message.contains("boundary value"));

        let b = PlanEntry { path_id: 0, kind: TestKind::BoundaryLow, step: Some(0) };
        let p = build_prompt(&b, &c, &FocalContext::default(), &focal(), &PromptTemplate::default());
        assert!(p.user_message.contains("at the boundary value of x > 10"));
    }

    #[test]
    fn template_slots() {
        assert!(matches!(PromptTemplate::parse("{role}"), Err(TemplateError::MissingSlots(_))));
        let t = PromptTemplate::parse("{role}{task}{chain}{focal_context}{focal_method}{test_context} {x}").unwrap();
        let out = t.render(&[
            ("role", "{task}"),
            ("task", ""),
            ("chain", ""),
            ("focal_context", ""),
            ("focal_method", "fn a() {}"),
            ("test_context", ""),
        ]);
        assert_eq!(out, "{task}fn a() {} {x}\n");
    }
}
