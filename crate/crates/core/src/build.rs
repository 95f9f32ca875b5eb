//! Toolchain outcome types and the compiler seam used by the repair loop.
//!
//! The adapters that actually spawn processes live in the std crate.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    #[default]
    Error,
    Warning,
    Note,
    Help,
}

/// One compiler message. `line` and `column` are 1-based; 0 means the
/// toolchain gave no location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    #[serde(default)]
    pub code: String,
    #[serde(default)]
    pub message: String,
    #[serde(default)]
    pub file: String,
    #[serde(default)]
    pub line: u32,
    #[serde(default)]
    pub column: u32,
    #[serde(default)]
    pub level: Severity,
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        self.level == Severity::Error
    }

    /// Identity used to count distinct errors during repair.
    pub fn key(&self) -> (String, String, u32) {
        (self.code.clone(), self.file.clone(), self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOutcome {
    pub success: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub duration_ms: u64,
    /// Undecodable diagnostic stream, kept verbatim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

impl BuildOutcome {
    pub fn ok(duration_ms: u64) -> Self {
        BuildOutcome { success: true, diagnostics: Vec::new(), duration_ms, raw: None, parse_error: None }
    }

    pub fn failed(diagnostics: Vec<Diagnostic>, duration_ms: u64) -> Self {
        BuildOutcome { success: false, diagnostics, duration_ms, raw: None, parse_error: None }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.is_error())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BuildError {
    #[error("toolchain missing: {0}")]
    ToolchainMissing(String),
    #[error("build timed out after {0}s")]
    Timeout(u64),
    #[error("build i/o: {0}")]
    Io(String),
}

/// Something that can compile one test source in its workspace.
pub trait Compiler {
    fn compile(&mut self, test_file: &str, source: &str) -> Result<BuildOutcome, BuildError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Passed,
    Failed,
    Panicked,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub status: RunStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub results: Vec<TestResult>,
    pub duration_ms: u64,
}

impl RunOutcome {
    pub fn passed(&self) -> usize {
        self.results.iter().filter(|r| r.status == RunStatus::Passed).count()
    }

    /// `None` for an empty outcome.
    pub fn pass_ratio(&self) -> Option<f64> {
        if self.results.is_empty() {
            None
        } else {
            Some(self.passed() as f64 / self.results.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageOutcome {
    pub lines_covered: u64,
    pub lines_total: u64,
    pub branches_covered: u64,
    pub branches_total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoverageError {
    #[error("coverage summary reports zero lines")]
    EmptyTarget,
    #[error("coverage summary reports more covered than total {0}")]
    Inconsistent(&'static str),
}

impl CoverageOutcome {
    pub fn check(&self) -> Result<(), CoverageError> {
        if self.lines_total == 0 {
            return Err(CoverageError::EmptyTarget);
        }
        if self.lines_covered > self.lines_total {
            return Err(CoverageError::Inconsistent("lines"));
        }
        if self.branches_covered > self.branches_total {
            return Err(CoverageError::Inconsistent("branches"));
        }
        Ok(())
    }

    pub fn line_ratio(&self) -> Option<f64> {
        (self.lines_total > 0).then(|| self.lines_covered as f64 / self.lines_total as f64)
    }

    /// `None` when the target has no branches at all.
    pub fn branch_ratio(&self) -> Option<f64> {
        (self.branches_total > 0).then(|| self.branches_covered as f64 / self.branches_total as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn ratios() {
        let c = CoverageOutcome { lines_covered: 93, lines_total: 100, branches_covered: 45, branches_total: 60 };
        assert_eq!(c.line_ratio(), Some(0.93));
        assert_eq!(c.branch_ratio(), Some(0.75));
        assert!(c.check().is_ok());
        assert_eq!(CoverageOutcome::default().check(), Err(CoverageError::EmptyTarget));

        let r = |s| TestResult { name: "t".into(), status: s };
        let run = RunOutcome {
            results: vec![r(RunStatus::Passed), r(RunStatus::Passed), r(RunStatus::Passed), r(RunStatus::Failed)],
            duration_ms: 0,
        };
        assert_eq!(run.pass_ratio(), Some(0.75));
        assert_eq!(RunOutcome::default().pass_ratio(), None);
    }
}
