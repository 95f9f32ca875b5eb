//! Session metrics: test counts, compile and execution pass rates, coverage,
//! token usage and repair effort.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::build::CoverageOutcome;
use crate::model::{TestArtifact, TestStatus};
use crate::util::pct;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scope: String,
    pub n_tests: u64,
    pub comp_pass_pct: Option<f64>,
    pub exec_pass_pct: Option<f64>,
    pub line_cov_pct: Option<f64>,
    pub branch_cov_pct: Option<f64>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub repair_rounds_total: u64,
    /// Set when the records behind this row could not be read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid: Option<String>,
}

impl MetricsRow {
    pub fn invalid(scope: impl Into<String>, why: impl Into<String>) -> Self {
        MetricsRow {
            scope: scope.into(),
            n_tests: 0,
            comp_pass_pct: None,
            exec_pass_pct: None,
            line_cov_pct: None,
            branch_cov_pct: None,
            tokens_in: 0,
            tokens_out: 0,
            repair_rounds_total: 0,
            invalid: Some(why.into()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    /// The crate row first, then one row per focal method by id.
    pub rows: Vec<MetricsRow>,
    /// The session stopped early because the token budget ran out.
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Default)]
struct Tally {
    generated: u64,
    compiled: u64,
    passed: u64,
    tokens_in: u64,
    tokens_out: u64,
    rounds: u64,
}

impl Tally {
    fn add(&mut self, a: &TestArtifact) {
        self.generated += 1;
        self.compiled += a.status.compiled() as u64;
        self.passed += (a.status == TestStatus::Passed) as u64;
        self.tokens_in += a.tokens_in;
        self.tokens_out += a.tokens_out;
        self.rounds += a.repair_rounds_used as u64;
    }

    fn row(&self, scope: &str, cov: Option<&CoverageOutcome>) -> MetricsRow {
        let (line_cov_pct, branch_cov_pct) = match cov {
            Some(c) => (pct(c.lines_covered, c.lines_total), pct(c.branches_covered, c.branches_total)),
            None => (None, None),
        };
        MetricsRow {
            scope: scope.to_string(),
            n_tests: self.generated,
            comp_pass_pct: pct(self.compiled, self.generated),
            exec_pass_pct: pct(self.passed, self.compiled),
            line_cov_pct,
            branch_cov_pct,
            tokens_in: self.tokens_in,
            tokens_out: self.tokens_out,
            repair_rounds_total: self.rounds,
            invalid: None,
        }
    }
}

/// Fold artifacts into a report. Coverage is a whole-suite measurement and
/// only appears on the crate row. Artifact order does not matter.
pub fn aggregate(crate_name: &str, artifacts: &[TestArtifact], cov: Option<&CoverageOutcome>) -> SessionReport {
    let mut total = Tally::default();
    let mut per_focal: BTreeMap<&str, Tally> = BTreeMap::new();
    for a in artifacts {
        total.add(a);
        per_focal.entry(a.focal_id.as_str()).or_default().add(a);
    }
    let mut rows = alloc::vec![total.row(crate_name, cov)];
    rows.extend(per_focal.iter().map(|(id, t)| t.row(id, None)));
    SessionReport { rows, truncated: false }
}

const HEADER: [&str; 9] = [
    "Scope",
    "# Tests",
    "Comp Pass (%)",
    "Exec Pass (%)",
    "Line Cov. (%)",
    "Branch Cov. (%)",
    "Tokens In",
    "Tokens Out",
    "Repair Rounds",
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

pub fn render_markdown(report: &SessionReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", HEADER.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(HEADER.len()));
    for r in &report.rows {
        let scope = match &r.invalid {
            Some(_) => format!("{} (invalid)", r.scope),
            None => r.scope.replace('|', "\\|"),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            scope,
            r.n_tests,
            cell(r.comp_pass_pct),
            cell(r.exec_pass_pct),
            cell(r.line_cov_pct),
            cell(r.branch_cov_pct),
            r.tokens_in,
            r.tokens_out,
            r.repair_rounds_total
        );
    }
    let notes: Vec<_> = report.rows.iter().filter_map(|r| r.invalid.as_ref().map(|w| (&r.scope, w))).collect();
    if report.truncated || !notes.is_empty() {
        out.push('\n');
    }
    if report.truncated {
        let _ = writeln!(out, "Session truncated: the token budget ran out before every focal method was processed.");
    }
    for (scope, why) in notes {
        let _ = writeln!(out, "Invalid record for {scope}: {why}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TestKind;

    fn art(focal: &str, n: u32, status: TestStatus) -> TestArtifact {
        TestArtifact {
            test_id: format!("{focal}-{n}"),
            focal_id: focal.into(),
            path_id: n,
            kind: TestKind::Path,
            step: None,
            source: String::new(),
            status,
            repair_rounds_used: 1,
            tokens_in: 100,
            tokens_out: 10,
            cause: None,
        }
    }

    #[test]
    fn all_pass() {
        let a: Vec<_> = (0..10).map(|i| art("f", i, TestStatus::Passed)).collect();
        let r = aggregate("c", &a, None);
        assert_eq!(r.rows[0].comp_pass_pct, Some(100.0));
        assert_eq!(r.rows[0].exec_pass_pct, Some(100.0));
        assert_eq!(r.rows[0].tokens_in, 1000);
        assert_eq!(r.rows[0].repair_rounds_total, 10);
        assert_eq!(r.rows.len(), 2);
    }

    #[test]
    fn nothing_generated_is_null() {
        let r = aggregate("c", &[], None);
        let row = &r.rows[0];
        assert_eq!((row.n_tests, row.comp_pass_pct, row.exec_pass_pct), (0, None, None));
    }

    #[test]
    fn markdown_header_only() {
        let md = render_markdown(&SessionReport::default());
        assert_eq!(md.lines().count(), 2);
        assert!(md.starts_with("| Scope | # Tests | Comp Pass (%) |"));
    }
}
