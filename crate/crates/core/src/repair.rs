//! Change-log repair of tests that fail to compile.
//!
//! Each error is shown to the model together with a few numbered lines
//! around it; the model answers with a line-addressed change log which is
//! applied before recompiling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use crate::build::Diagnostic;
use crate::build::{BuildOutcome, Compiler};
use crate::llm::{ChatModel, ChatRequest, REPAIR_TEMPERATURE};
use crate::model::{TestArtifact, TestStatus};

pub const DEFAULT_RADIUS: u32 = 3;
pub const REPAIR_MAX_OUTPUT_TOKENS: u32 = 512;

pub const REPAIR_SYSTEM: &str = "You fix compilation errors in Rust unit tests with minimal line edits.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairBudget {
    /// Distinct errors a single test may have repaired (E).
    pub max_errors: u32,
    /// Model round trips allowed per distinct error (I).
    pub max_iterations: u32,
}

impl Default for RepairBudget {
    fn default() -> Self {
        RepairBudget { max_errors: 10, max_iterations: 3 }
    }
}

impl RepairBudget {
    pub fn new(max_errors: u32, max_iterations: u32) -> Option<Self> {
        (max_errors >= 1 && max_iterations >= 1).then_some(RepairBudget { max_errors, max_iterations })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub line: u32,
    pub original: String,
    /// New text for the line; may span several lines or be empty (deletion).
    pub replacement: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeLog {
    pub edits: Vec<Edit>,
}

/// Lines `line - radius ..= line + radius`, clamped to the file, each
/// prefixed with its 1-based number as `n | text`.
pub fn snippet_around(source: &str, line: u32, radius: u32) -> String {
    let lines: Vec<&str> = source.lines().collect();
    if lines.is_empty() {
        return String::new();
    }
    let last = lines.len() as u32;
    let line = line.clamp(1, last);
    let lo = line.saturating_sub(radius).max(1);
    let hi = (line + radius).min(last);
    let mut out = String::new();
    for n in lo..=hi {
        let _ = writeln!(out, "{n} | {}", lines[(n - 1) as usize]);
    }
    out
}

pub fn build_repair_prompt(diag: &Diagnostic, snippet: &str) -> ChatRequest {
    let header = if diag.code.is_empty() { "error".to_string() } else { format!("error[{}]", diag.code) };
    let mut user = String::new();
    let _ = writeln!(user, "The following Rust test fails to compile.");
    let _ = writeln!(user);
    let _ = writeln!(user, "{header}: {}", diag.message);
    let _ = writeln!(user, " --> {}:{}:{}", diag.file, diag.line, diag.column);
    let _ = writeln!(user);
    let _ = writeln!(user, "The error occurs at line {}. Surrounding code:", diag.line);
    user.push_str(snippet);
    if !snippet.ends_with('\n') {
        user.push('\n');
    }
    user.push_str(
        "\nReply with a change log that fixes this error and nothing else. \
Use exactly this format for every changed line, with no other text:\n\
LINE: <line number>\n\
ORIGINAL:\n\
<the original line, exactly as shown, without its number>\n\
REPLACEMENT:\n\
<the new line or lines>\n\
END\n",
    );
    ChatRequest {
        system: REPAIR_SYSTEM.to_string(),
        user,
        max_output_tokens: REPAIR_MAX_OUTPUT_TOKENS,
        temperature: REPAIR_TEMPERATURE,
        request_tag: "repair".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unparseable change log (line {at}): {reason}")]
pub struct UnparseableChangeLog {
    pub at: usize,
    pub reason: String,
}

fn bad(at: usize, reason: impl Into<String>) -> UnparseableChangeLog {
    UnparseableChangeLog { at, reason: reason.into() }
}

enum State {
    Outside,
    WantOriginalTag(u32),
    WantOriginal(u32),
    WantReplacementTag(u32, String),
    Replacement(u32, String, Vec<String>),
}

/// Parse the mandated `LINE:/ORIGINAL:/REPLACEMENT:/END` blocks. Text
/// outside blocks (prose, code fences) is ignored.
pub fn parse_change_log(text: &str) -> Result<ChangeLog, UnparseableChangeLog> {
    let mut edits: Vec<Edit> = Vec::new();
    let mut state = State::Outside;
    let mut last = 0;
    for (i, raw) in text.lines().enumerate() {
        let at = i + 1;
        last = at;
        let t = raw.trim();
        state = match state {
            State::Outside => match t.strip_prefix("LINE:") {
                Some(n) => {
                    let n: u32 = n.trim().parse().map_err(|_| bad(at, "LINE needs a number"))?;
                    if n == 0 {
                        return Err(bad(at, "line numbers start at 1"));
                    }
                    State::WantOriginalTag(n)
                }
                None => State::Outside,
            },
            State::WantOriginalTag(n) if t == "ORIGINAL:" => State::WantOriginal(n),
            State::WantOriginalTag(_) => return Err(bad(at, "expected ORIGINAL:")),
            State::WantOriginal(n) => {
                let original = strip_number(raw, n).trim_end().to_string();
                if original.trim().is_empty() {
                    return Err(bad(at, "empty ORIGINAL line"));
                }
                State::WantReplacementTag(n, original)
            }
            State::WantReplacementTag(n, o) if t == "REPLACEMENT:" => State::Replacement(n, o, Vec::new()),
            State::WantReplacementTag(..) => return Err(bad(at, "expected REPLACEMENT:")),
            State::Replacement(n, original, lines) if t == "END" => {
                let replacement = lines.join("\n");
                if replacement.trim_end() == original {
                    return Err(bad(at, format!("edit of line {n} changes nothing")));
                }
                if edits.iter().any(|e| e.line == n) {
                    return Err(bad(at, format!("line {n} edited twice")));
                }
                edits.push(Edit { line: n, original, replacement });
                State::Outside
            }
            State::Replacement(n, o, mut lines) => {
                lines.push(strip_number(raw, n).trim_end().to_string());
                State::Replacement(n, o, lines)
            }
        };
    }
    if !matches!(state, State::Outside) {
        return Err(bad(last, "unterminated block"));
    }
    if edits.is_empty() {
        return Err(bad(0, "no edit blocks"));
    }
    Ok(ChangeLog { edits })
}

/// Models sometimes echo the snippet's `n | ` prefix; drop it when it
/// names the edited line.
fn strip_number(line: &str, n: u32) -> &str {
    let t = line.trim_start();
    let digits = t.len() - t.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 && t[..digits].parse() == Ok(n) {
        if let Some(rest) = t[digits..].strip_prefix(" | ").or_else(|| t[digits..].strip_prefix(" |")) {
            return rest;
        }
    }
    line
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("stale edit at line {line}: expected `{expected}`, found `{found}`")]
    StaleEdit { line: u32, expected: String, found: String },
    #[error("line {0} edited more than once")]
    DuplicateLine(u32),
}

/// Apply every edit, highest line first. All originals are checked against
/// the input before anything changes.
pub fn apply_change_log(source: &str, log: &ChangeLog) -> Result<String, ApplyError> {
    let mut lines: Vec<String> = source.lines().map(str::to_string).collect();
    let mut seen = BTreeSet::new();
    for e in &log.edits {
        if !seen.insert(e.line) {
            return Err(ApplyError::DuplicateLine(e.line));
        }
        let found = lines.get((e.line as usize).wrapping_sub(1)).map(|l| l.trim_end()).unwrap_or("");
        if e.line == 0 || e.line as usize > lines.len() || found != e.original.trim_end() {
            return Err(ApplyError::StaleEdit { line: e.line, expected: e.original.clone(), found: found.to_string() });
        }
    }
    let mut edits: Vec<&Edit> = log.edits.iter().collect();
    edits.sort_by_key(|e| core::cmp::Reverse(e.line));
    for e in edits {
        let idx = e.line as usize - 1;
        let new: Vec<String> =
            if e.replacement.is_empty() { Vec::new() } else { e.replacement.lines().map(str::to_string).collect() };
        lines.splice(idx..=idx, new);
    }
    let mut out = lines.join("\n");
    if source.ends_with('\n') && !out.is_empty() {
        out.push('\n');
    }
    Ok(out)
}

/// One round trip of the repair loop, kept for the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairExchange {
    pub diagnostic: Diagnostic,
    pub request: ChatRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    /// Why the response was not applied, if it wasn't.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub artifact: TestArtifact,
    pub exchanges: Vec<RepairExchange>,
    pub last_build: BuildOutcome,
    /// The loop stopped because the gateway refused the token budget.
    pub budget_exhausted: bool,
}

/// Drive the repair loop for a test whose first build failed.
///
/// Works on the first error of each build. At most `max_errors` distinct
/// errors (by code, file and line) are taken on, each for at most
/// `max_iterations` model calls, so the model is called no more than
/// `max_errors * max_iterations` times.
pub fn repair_test<C, M>(
    mut test: TestArtifact,
    first_build: BuildOutcome,
    test_file: &str,
    compiler: &mut C,
    model: &M,
    budget: RepairBudget,
) -> RepairOutcome
where
    C: Compiler + ?Sized,
    M: ChatModel + ?Sized,
{
    let mut build = first_build;
    let mut exchanges = Vec::new();
    let mut attempts: BTreeMap<(String, String, u32), u32> = BTreeMap::new();
    let mut budget_exhausted = false;

    let cause = loop {
        if build.success {
            break None;
        }
        let Some(diag) = build.errors().next().cloned() else {
            break Some(match &build.parse_error {
                Some(e) => format!("unreadable build output: {e}"),
                None => "build failed without error diagnostics".to_string(),
            });
        };
        let key = diag.key();
        let tries = attempts.get(&key).copied();
        if tries.is_none() && attempts.len() as u32 >= budget.max_errors {
            break Some(format!("error budget of {} exhausted", budget.max_errors));
        }
        let tries = tries.unwrap_or(0);
        if tries >= budget.max_iterations {
            break Some(format!(
                "error[{}] at {}:{} persisted after {} iterations",
                diag.code, diag.file, diag.line, budget.max_iterations
            ));
        }
        attempts.insert(key, tries + 1);

        let mut request = build_repair_prompt(&diag, &snippet_around(&test.source, diag.line, DEFAULT_RADIUS));
        request.request_tag = format!("{}/repair/{}", test.test_id, test.repair_rounds_used + 1);
        test.repair_rounds_used += 1;
        let response = match model.complete(&request) {
            Ok(r) => r,
            Err(e) => {
                budget_exhausted = matches!(e, crate::llm::GatewayError::BudgetExhausted { .. });
                exchanges.push(RepairExchange { diagnostic: diag, request, response: None, rejected: Some(e.to_string()) });
                break Some(format!("gateway: {e}"));
            }
        };
        test.tokens_in += response.input_tokens;
        test.tokens_out += response.output_tokens;

        let patched = parse_change_log(&response.text)
            .map_err(|e| e.to_string())
            .and_then(|log| apply_change_log(&test.source, &log).map_err(|e| e.to_string()));
        let rejected = patched.as_ref().err().cloned();
        exchanges.push(RepairExchange { diagnostic: diag, request, response: Some(response.text), rejected });
        let Ok(source) = patched else { continue };
        test.source = source;
        match compiler.compile(test_file, &test.source) {
            Ok(b) => build = b,
            Err(e) => break Some(format!("build: {e}")),
        }
    };

    match cause {
        None => {
            let _ = test.advance(TestStatus::Compiled);
        }
        Some(c) => {
            let _ = test.advance(TestStatus::Unrepairable);
            test.cause = Some(c);
        }
    }
    RepairOutcome { artifact: test, exchanges, last_build: build, budget_exhausted }
}
