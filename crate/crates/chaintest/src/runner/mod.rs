//! Toolchain adapters: compile a test, run it, measure suite coverage.

mod command;
pub mod coverage;
pub mod diagnostics;
pub mod libtest;
mod stub;

use chaintest_core::build::{BuildError, BuildOutcome, Compiler, CoverageError, CoverageOutcome, RunOutcome};

pub use command::{run_shell, CommandRunner, ShellOutput};
pub use stub::{StubEntry, StubRunner, StubScript};

use crate::config::{ConfigError, RunnerConfig};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoverageFailure {
    #[error("coverage tool missing: {0}")]
    ToolMissing(String),
    #[error("unreadable coverage summary: {0}")]
    Parse(String),
    #[error(transparent)]
    Invalid(#[from] CoverageError),
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// One target workspace. Implementations serialize builds internally: at
/// most one compile, run or coverage command per workspace at a time.
pub trait Runner: Send + Sync {
    /// Place `source` in the workspace as `test_file` and build it.
    fn compile(&self, test_file: &str, source: &str) -> Result<BuildOutcome, BuildError>;
    /// Run the tests of one test file (`filter` is its stem).
    fn run_tests(&self, filter: &str) -> Result<RunOutcome, BuildError>;
    /// Remove a test file that must not take part in later builds.
    fn discard(&self, test_file: &str) -> Result<(), BuildError>;
    fn measure_coverage(&self) -> Result<CoverageOutcome, CoverageFailure>;
}

/// Adapter handing a runner to the repair loop.
pub struct RunnerCompiler<'a>(pub &'a dyn Runner);

impl Compiler for RunnerCompiler<'_> {
    fn compile(&mut self, test_file: &str, source: &str) -> Result<BuildOutcome, BuildError> {
        self.0.compile(test_file, source)
    }
}

pub fn from_config(cfg: &RunnerConfig) -> Result<Box<dyn Runner>, ConfigError> {
    if let Some(stub) = &cfg.stub {
        return Ok(Box::new(StubRunner::load(stub, cfg.test_timeout_s)?));
    }
    if cfg.diagnostic_format != "json-lines" {
        return Err(ConfigError::Invalid(format!("unsupported diagnostic_format `{}`", cfg.diagnostic_format)));
    }
    let ws = cfg.workspace.clone().ok_or_else(|| ConfigError::Invalid("runner needs a workspace or a stub".into()))?;
    if cfg.compile_cmd.is_empty() || cfg.test_cmd.is_empty() {
        return Err(ConfigError::Invalid("runner needs compile_cmd and test_cmd".into()));
    }
    Ok(Box::new(CommandRunner::new(ws, cfg.clone())))
}
