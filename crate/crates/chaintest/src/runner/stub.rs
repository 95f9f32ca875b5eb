use std::collections::BTreeMap;
use std::path::Path;

use chaintest_core::build::{
    BuildError, BuildOutcome, CoverageOutcome, Diagnostic, RunOutcome, RunStatus, TestResult,
};
use globset::Glob;
use serde::{Deserialize, Serialize};

use super::{CoverageFailure, Runner};
use crate::config::ConfigError;
use crate::dump::read_json;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubDiagnostic {
    #[serde(flatten)]
    pub diagnostic: Diagnostic,
    /// The error goes away once the source contains this text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_by: Option<String>,
}

fn passed() -> RunStatus {
    RunStatus::Passed
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubEntry {
    #[serde(default)]
    pub diagnostics: Vec<StubDiagnostic>,
    /// The build emits an undecodable diagnostic stream.
    #[serde(default)]
    pub malformed: bool,
    #[serde(default = "passed")]
    pub run: RunStatus,
    /// Simulated test run time; past the test timeout the run times out.
    #[serde(default)]
    pub delay_ms: u64,
    /// Per-test statuses for files holding several tests; overrides `run`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<Vec<TestResult>>,
}

impl Default for StubEntry {
    fn default() -> Self {
        StubEntry { diagnostics: Vec::new(), malformed: false, run: RunStatus::Passed, delay_ms: 0, results: None }
    }
}

/// Scripted toolchain. `tests` is keyed by test file name or glob; an exact
/// name wins, then the longest matching glob. Unmatched files compile and
/// pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubScript {
    #[serde(default)]
    pub tests: BTreeMap<String, StubEntry>,
    /// Absent means the coverage tool is unavailable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageOutcome>,
}

/// Deterministic runner driven by a [`StubScript`]; it never sleeps and
/// reports zero durations.
pub struct StubRunner {
    script: StubScript,
    globs: Vec<(globset::GlobMatcher, String)>,
    test_timeout_ms: u64,
}

impl StubRunner {
    pub fn new(script: StubScript, test_timeout_s: u64) -> Result<Self, ConfigError> {
        let globs: Vec<_> = script
            .tests
            .keys()
            .map(|k| {
                Glob::new(k)
                    .map(|g| (g.compile_matcher(), k.clone()))
                    .map_err(|e| ConfigError::Invalid(format!("stub pattern `{k}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut globs = globs;
        globs.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.1.cmp(&b.1)));
        Ok(StubRunner { script, globs, test_timeout_ms: test_timeout_s.saturating_mul(1000) })
    }

    pub fn load(path: &Path, test_timeout_s: u64) -> Result<Self, ConfigError> {
        StubRunner::new(read_json(path)?, test_timeout_s)
    }

    fn entry(&self, test_file: &str) -> Option<&StubEntry> {
        if let Some(e) = self.script.tests.get(test_file) {
            return Some(e);
        }
        self.globs.iter().find(|(g, _)| g.is_match(test_file)).map(|(_, k)| &self.script.tests[k])
    }
}

impl Runner for StubRunner {
    fn compile(&self, test_file: &str, source: &str) -> Result<BuildOutcome, BuildError> {
        let Some(entry) = self.entry(test_file) else { return Ok(BuildOutcome::ok(0)) };
        if entry.malformed {
            return Ok(BuildOutcome {
                success: false,
                diagnostics: Vec::new(),
                duration_ms: 0,
                raw: Some("error: could not compile (stub)\n".into()),
                parse_error: Some("line 1: expected value".into()),
            });
        }
        let diags: Vec<Diagnostic> = entry
            .diagnostics
            .iter()
            .filter(|d| d.fixed_by.as_ref().is_none_or(|fix| !source.contains(fix.as_str())))
            .map(|d| {
                let mut diag = d.diagnostic.clone();
                if diag.file.is_empty() {
                    diag.file = format!("tests/{test_file}");
                }
                diag
            })
            .collect();
        let success = !diags.iter().any(Diagnostic::is_error);
        Ok(BuildOutcome { success, diagnostics: diags, duration_ms: 0, raw: None, parse_error: None })
    }

    fn run_tests(&self, filter: &str) -> Result<RunOutcome, BuildError> {
        let entry = self.entry(&format!("{filter}.rs")).cloned().unwrap_or_default();
        let timed_out = entry.delay_ms > self.test_timeout_ms;
        let results = match entry.results {
            Some(mut results) => {
                if timed_out {
                    results.iter_mut().for_each(|r| r.status = RunStatus::TimedOut);
                }
                results
            }
            None => {
                let status = if timed_out { RunStatus::TimedOut } else { entry.run };
                vec![TestResult { name: filter.to_string(), status }]
            }
        };
        Ok(RunOutcome { results, duration_ms: 0 })
    }

    fn discard(&self, _test_file: &str) -> Result<(), BuildError> {
        Ok(())
    }

    fn measure_coverage(&self) -> Result<CoverageOutcome, CoverageFailure> {
        let cov = self.script.coverage.ok_or_else(|| CoverageFailure::ToolMissing("stub has no coverage".into()))?;
        cov.check()?;
        Ok(cov)
    }
}
