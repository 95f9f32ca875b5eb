use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chaintest_core::build::{BuildError, BuildOutcome, CoverageOutcome, RunOutcome, RunStatus, TestResult};
use wait_timeout::ChildExt;

use super::{coverage, diagnostics, libtest, CoverageFailure, Runner};
use crate::config::RunnerConfig;

#[derive(Debug)]
pub struct ShellOutput {
    pub status: Option<ExitStatus>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
    pub elapsed: Duration,
}

impl ShellOutput {
    pub fn success(&self) -> bool {
        self.status.is_some_and(|s| s.success())
    }

    /// `sh` reports 127 when the command itself was not found.
    pub fn command_missing(&self) -> bool {
        self.status.and_then(|s| s.code()) == Some(127)
    }
}

/// Run `cmd` with `sh -c` in `cwd`, killing it and everything it started
/// after `timeout`.
pub fn run_shell(cmd: &str, cwd: &Path, timeout: Duration) -> std::io::Result<ShellOutput> {
    let start = Instant::now();
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .current_dir(cwd)
        .process_group(0)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;
    let mut out = child.stdout.take().expect("piped stdout");
    let mut err = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = out.read_to_string(&mut s);
        s
    });
    let err_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = err.read_to_string(&mut s);
        s
    });
    let status = match child.wait_timeout(timeout)? {
        Some(s) => Some(s),
        None => {
            // Children of the shell would keep the pipes open; kill the
            // whole group.
            if let Ok(pgid) = i32::try_from(child.id()) {
                // SAFETY: plain syscall; the group was created for this child
                // and nothing else joins it.
                unsafe {
                    libc::kill(-pgid, libc::SIGKILL);
                }
            }
            let _ = child.kill();
            let _ = child.wait();
            None
        }
    };
    Ok(ShellOutput {
        status,
        stdout: out_reader.join().unwrap_or_default(),
        stderr: err_reader.join().unwrap_or_default(),
        timed_out: status.is_none(),
        elapsed: start.elapsed(),
    })
}

/// Runs the configured shell commands in a real crate.
///
/// Placeholders: `{workspace}`, `{test_file}` (absolute path), `{test_name}`
/// and `{filter}` (file stem).
pub struct CommandRunner {
    workspace: PathBuf,
    cfg: RunnerConfig,
    lock: Mutex<()>,
}

impl CommandRunner {
    pub fn new(workspace: PathBuf, cfg: RunnerConfig) -> Self {
        CommandRunner { workspace, cfg, lock: Mutex::new(()) }
    }

    fn test_path(&self, test_file: &str) -> PathBuf {
        self.workspace.join("tests").join(test_file)
    }

    fn expand(&self, template: &str, stem: &str, test_file: &str) -> String {
        template
            .replace("{workspace}", &self.workspace.display().to_string())
            .replace("{test_file}", &self.test_path(test_file).display().to_string())
            .replace("{test_name}", stem)
            .replace("{filter}", stem)
    }

    fn io(e: std::io::Error) -> BuildError {
        if e.kind() == std::io::ErrorKind::NotFound {
            BuildError::ToolchainMissing(e.to_string())
        } else {
            BuildError::Io(e.to_string())
        }
    }
}

fn stem(test_file: &str) -> &str {
    test_file.strip_suffix(".rs").unwrap_or(test_file)
}

impl Runner for CommandRunner {
    fn compile(&self, test_file: &str, source: &str) -> Result<BuildOutcome, BuildError> {
        let _guard = self.lock.lock().unwrap();
        let path = self.test_path(test_file);
        std::fs::create_dir_all(path.parent().expect("tests dir")).map_err(Self::io)?;
        std::fs::write(&path, source).map_err(Self::io)?;
        let cmd = self.expand(&self.cfg.compile_cmd, stem(test_file), test_file);
        let out = run_shell(&cmd, &self.workspace, Duration::from_secs(self.cfg.build_timeout_s)).map_err(Self::io)?;
        if out.timed_out {
            return Err(BuildError::Timeout(self.cfg.build_timeout_s));
        }
        if out.command_missing() {
            return Err(BuildError::ToolchainMissing(out.stderr.trim().to_string()));
        }
        let duration_ms = out.elapsed.as_millis() as u64;
        match diagnostics::parse_json_lines(&out.stdout) {
            Ok(diags) => {
                let success = out.success() && !diags.iter().any(|d| d.is_error());
                Ok(BuildOutcome { success, diagnostics: diags, duration_ms, raw: None, parse_error: None })
            }
            Err(e) => Ok(BuildOutcome {
                success: false,
                diagnostics: Vec::new(),
                duration_ms,
                raw: Some(out.stdout),
                parse_error: Some(e),
            }),
        }
    }

    fn run_tests(&self, filter: &str) -> Result<RunOutcome, BuildError> {
        let _guard = self.lock.lock().unwrap();
        let cmd = self.expand(&self.cfg.test_cmd, filter, &format!("{filter}.rs"));
        let out = run_shell(&cmd, &self.workspace, Duration::from_secs(self.cfg.test_timeout_s)).map_err(Self::io)?;
        if out.command_missing() {
            return Err(BuildError::ToolchainMissing(out.stderr.trim().to_string()));
        }
        let mut results = libtest::parse(&out.stdout);
        if out.timed_out {
            // Tests still running when the clock ran out never reported.
            let started = libtest::started(&out.stdout);
            for name in started {
                if !results.iter().any(|r| r.name == name) {
                    results.push(TestResult { name, status: RunStatus::TimedOut });
                }
            }
            if results.is_empty() {
                results.push(TestResult { name: filter.to_string(), status: RunStatus::TimedOut });
            }
        }
        Ok(RunOutcome { results, duration_ms: out.elapsed.as_millis() as u64 })
    }

    fn discard(&self, test_file: &str) -> Result<(), BuildError> {
        let _guard = self.lock.lock().unwrap();
        match std::fs::remove_file(self.test_path(test_file)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Self::io(e)),
            _ => Ok(()),
        }
    }

    fn measure_coverage(&self) -> Result<CoverageOutcome, CoverageFailure> {
        let _guard = self.lock.lock().unwrap();
        if self.cfg.coverage_cmd.is_empty() {
            return Err(CoverageFailure::ToolMissing("no coverage_cmd configured".into()));
        }
        let cmd = self.expand(&self.cfg.coverage_cmd, "", "");
        let out = run_shell(&cmd, &self.workspace, Duration::from_secs(self.cfg.build_timeout_s))
            .map_err(|e| CoverageFailure::ToolMissing(e.to_string()))?;
        if out.timed_out {
            return Err(BuildError::Timeout(self.cfg.build_timeout_s).into());
        }
        if out.command_missing() || !out.success() {
            return Err(CoverageFailure::ToolMissing(out.stderr.trim().to_string()));
        }
        coverage::parse(&out.stdout)
    }
}
