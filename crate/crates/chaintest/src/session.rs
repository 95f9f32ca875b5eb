//! The `generate` session: one worker per focal method, persisted so a rerun
//! only redoes what is missing.
//!
//! Layout of a session directory:
//!
//! ```text
//! session.json              crate name, focal ids in dump order, truncation flag
//! focal/<id>.json           FocalRecord: fingerprint, status, artifacts
//! tests/<id>/<key>.rs       final source of every generated test
//! transcripts/<id>.json     prompts, replies, diagnostics and repair exchanges
//! coverage.json             suite coverage or the reason it is missing
//! report.json, report.md
//! timing.jsonl              wall-clock timings; the only nondeterministic file
//! ```

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use chaintest_core::build::{BuildError, CoverageOutcome, Diagnostic, RunStatus, TestResult};
use chaintest_core::context::{build_context, ContextError};
use chaintest_core::cover::minimize;
use chaintest_core::llm::{extract_code, ChatModel, ChatRequest, GatewayError};
use chaintest_core::paths::PathError;
use chaintest_core::prompt::{build_prompt, plan_tests, PlanEntry, PlanError, PromptTemplate};
use chaintest_core::repair::{repair_test, RepairExchange};
use chaintest_core::validate::validate_model;
use chaintest_core::{FocalMethod, ProgramModel, TestArtifact, TestKind, TestStatus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyze::chains_with_fallback;
use crate::config::{ConfigError, ProviderKind, SessionConfig};
use crate::dump::{canonical_json, pretty_json, safe_id, sha256_hex};
use crate::gateway::Gateway;
use crate::runner::{self, Runner, RunnerCompiler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalStatus {
    Completed,
    Failed,
    /// The token budget ran out while this focal method was in progress.
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalRecord {
    pub focal_id: String,
    pub fingerprint: String,
    pub status: FocalStatus,
    /// Path ids picked by minimization, in selection order.
    #[serde(default)]
    pub minimized: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occurrence_bound: Option<u32>,
    #[serde(default)]
    pub artifacts: Vec<TestArtifact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionIndex {
    #[serde(rename = "crate")]
    pub crate_name: String,
    pub focal: Vec<String>,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestTranscript {
    pub test_id: String,
    pub request: ChatRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub first_build: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repairs: Vec<RepairExchange>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub run: Vec<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub focal_id: String,
    pub tests: Vec<TestTranscript>,
}

/// Either the suite's coverage or why it could not be measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoverageFile {
    Measured(CoverageOutcome),
    Missing { error: String },
}

#[derive(Debug, Clone, Default)]
pub struct SessionOptions {
    pub parallel: usize,
    pub template: Option<PathBuf>,
    pub mock_script: Option<PathBuf>,
    pub stub_runner: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("program model has {} validation issue(s)", .0.len())]
    Invalid(Vec<chaintest_core::validate::ValidationIssue>),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    pub processed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub truncated: bool,
    pub gateway_requests: u64,
}

/// Why a focal method could not be planned.
#[derive(Debug, thiserror::Error)]
pub enum FocalError {
    #[error(transparent)]
    Paths(#[from] PathError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Context(#[from] ContextError),
}

/// One planned generation request.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedTest {
    pub key: String,
    pub entry: PlanEntry,
    pub request: ChatRequest,
}

pub struct FocalPlan {
    pub minimized: Vec<u32>,
    pub occurrence_bound: Option<u32>,
    pub tests: Vec<PlannedTest>,
}

/// File-name key of a planned test: `p4`, `p4-s0-low`, `p4-s1-high`.
pub fn test_key(entry: &PlanEntry) -> String {
    match (entry.kind, entry.step) {
        (TestKind::Path, _) | (_, None) => format!("p{}", entry.path_id),
        (TestKind::BoundaryLow, Some(s)) => format!("p{}-s{s}-low", entry.path_id),
        (TestKind::BoundaryHigh, Some(s)) => format!("p{}-s{s}-high", entry.path_id),
    }
}

/// Enumerate, minimize, plan and render every generation request of `focal`.
pub fn plan_focal(
    focal: &FocalMethod,
    model: &ProgramModel,
    cfg: &SessionConfig,
    template: &PromptTemplate,
) -> Result<FocalPlan, FocalError> {
    let traversal = cfg.generation.traversal();
    let (paths, bound) = chains_with_fallback(&focal.cfg, &traversal)?;
    let selected = minimize(&paths);
    let plan = plan_tests(&focal.id, &selected, cfg.generation.max_tests_per_focal)?;
    let ctx = build_context(focal, model, cfg.generation.context_budget_tokens)?;
    let tests = plan
        .entries
        .iter()
        .map(|entry| {
            let chain = selected.iter().find(|c| c.path_id == entry.path_id).expect("planned path is selected");
            let key = test_key(entry);
            let bundle = build_prompt(entry, chain, &ctx, focal, template);
            let request = bundle.request(cfg.generation.max_output_tokens, format!("{}/{key}", focal.id));
            PlannedTest { key, entry: *entry, request }
        })
        .collect();
    Ok(FocalPlan {
        minimized: selected.iter().map(|c| c.path_id).collect(),
        occurrence_bound: (bound != traversal.max_occurrences_per_site).then_some(bound),
        tests,
    })
}

/// Content hash deciding whether a stored record is still valid: the focal
/// entry, every function it references, the output-relevant configuration,
/// the template and any scripted provider or runner.
pub fn fingerprint(focal: &FocalMethod, model: &ProgramModel, cfg: &SessionConfig, template_text: &str, scripts: &[String]) -> String {
    let mut parts = vec![canonical_json(focal)];
    let mut refs: Vec<&str> = focal.context_refs.ref_ids().collect();
    refs.sort_unstable();
    refs.dedup();
    for id in refs {
        if let Some(f) = model.function(id) {
            parts.push(canonical_json(f));
        }
    }
    parts.push(canonical_json(&cfg.fingerprint_view()));
    parts.push(template_text.to_string());
    parts.extend(scripts.iter().cloned());
    let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    sha256_hex(&refs)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io { path: path.display().to_string(), source }
}

/// Write through a temporary file so a crash never leaves a half record.
fn write_atomic(path: &Path, contents: &str) -> Result<(), SessionError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_text(path: &Path) -> Result<String, SessionError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

struct Shared<'a> {
    model: &'a ProgramModel,
    cfg: &'a SessionConfig,
    template: &'a PromptTemplate,
    gateway: &'a Gateway,
    runner: &'a dyn Runner,
    out: &'a Path,
    stop: AtomicBool,
    timing: std::sync::Mutex<std::fs::File>,
}

impl Shared<'_> {
    fn time(&self, focal_id: &str, event: &str, started: Instant) {
        let unix_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        let line = serde_json::json!({
            "focal_id": focal_id,
            "event": event,
            "elapsed_ms": started.elapsed().as_millis() as u64,
            "unix_ms": unix_ms as u64,
        });
        let mut f = self.timing.lock().unwrap();
        let _ = writeln!(f, "{line}");
    }
}

enum Outcome {
    Skipped,
    Done(FocalStatus),
}

/// Run (or resume) a generation session over `model` into `out`.
pub fn generate(model: &ProgramModel, mut cfg: SessionConfig, opts: &SessionOptions, out: &Path) -> Result<SessionSummary, SessionError> {
    let issues = validate_model(model);
    if !issues.is_empty() {
        return Err(SessionError::Invalid(issues));
    }
    if let Some(p) = &opts.mock_script {
        cfg.provider.provider = ProviderKind::Mock;
        cfg.provider.mock_script = Some(p.clone());
    }
    if let Some(p) = &opts.stub_runner {
        cfg.runner.stub = Some(p.clone());
    }
    cfg.check()?;

    let template_text = match &opts.template {
        Some(p) => read_text(p)?,
        None => chaintest_core::prompt::DEFAULT_TEMPLATE.to_string(),
    };
    let template = PromptTemplate::parse(&template_text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let mut scripts = Vec::new();
    if cfg.provider.provider == ProviderKind::Mock {
        if let Some(p) = &cfg.provider.mock_script {
            scripts.push(read_text(p)?);
        }
    }
    if let Some(p) = &cfg.runner.stub {
        scripts.push(read_text(p)?);
    }

    let gateway = Gateway::from_config(&cfg.provider)?;
    let runner = runner::from_config(&cfg.runner)?;

    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let timing_path = out.join("timing.jsonl");
    let timing = std::fs::OpenOptions::new().create(true).append(true).open(&timing_path).map_err(io_err(&timing_path))?;

    let focal: Vec<&FocalMethod> = model
        .functions
        .iter()
        .filter(|f| cfg.generation.focal.is_empty() || cfg.generation.focal.contains(&f.id))
        .collect();
    let crate_name = model.crate_name.clone().unwrap_or_else(|| "crate".into());
    let mut index = SessionIndex { crate_name, focal: focal.iter().map(|f| f.id.clone()).collect(), truncated: false };
    write_atomic(&out.join("session.json"), &pretty_json(&index))?;

    let shared = Shared {
        model,
        cfg: &cfg,
        template: &template,
        gateway: &gateway,
        runner: runner.as_ref(),
        out,
        stop: AtomicBool::new(false),
        timing: std::sync::Mutex::new(timing),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallel.max(1))
        .build()
        .map_err(|e| SessionError::Pool(e.to_string()))?;
    let outcomes: Vec<Result<Outcome, SessionError>> = pool.install(|| {
        focal
            .par_iter()
            .map(|f| {
                let fp = fingerprint(f, model, &cfg, &template_text, &scripts);
                run_focal(&shared, f, fp)
            })
            .collect()
    });

    let mut summary = SessionSummary { processed: 0, skipped: 0, failed: 0, truncated: false, gateway_requests: 0 };
    for o in outcomes {
        match o? {
            Outcome::Skipped => summary.skipped += 1,
            Outcome::Done(status) => {
                summary.processed += 1;
                summary.failed += (status == FocalStatus::Failed) as usize;
            }
        }
    }
    summary.truncated = shared.stop.load(Ordering::SeqCst);
    summary.gateway_requests = gateway.totals().attempts;

    // A session resumed after truncation is only whole once every focal
    // method has a finished record.
    let records = load_records(out, &index.focal);
    index.truncated = summary.truncated
        || index.focal.iter().any(|id| match records.get(id) {
            Some(Ok(r)) => r.status == FocalStatus::Truncated,
            Some(Err(_)) => false,
            None => true,
        });
    summary.truncated = index.truncated;
    write_atomic(&out.join("session.json"), &pretty_json(&index))?;

    let started = Instant::now();
    let coverage = match runner.measure_coverage() {
        Ok(c) => CoverageFile::Measured(c),
        Err(e) => CoverageFile::Missing { error: e.to_string() },
    };
    shared.time("", "coverage", started);
    write_atomic(&out.join("coverage.json"), &pretty_json(&coverage))?;

    crate::report::write_reports(out).map_err(|e| SessionError::Io {
        path: out.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    Ok(summary)
}

/// Every record named in the index, keyed by focal id; a record that does
/// not parse maps to its error text.
pub fn load_records(out: &Path, focal: &[String]) -> std::collections::BTreeMap<String, Result<FocalRecord, String>> {
    let mut map = std::collections::BTreeMap::new();
    for id in focal {
        let path = record_path(out, id);
        match std::fs::read_to_string(&path) {
            Ok(text) => {
                map.insert(id.clone(), serde_json::from_str(&text).map_err(|e| e.to_string()));
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => {
                map.insert(id.clone(), Err(e.to_string()));
            }
        }
    }
    map
}

pub fn record_path(out: &Path, focal_id: &str) -> PathBuf {
    out.join("focal").join(format!("{}.json", safe_id(focal_id)))
}

pub fn test_path(out: &Path, focal_id: &str, key: &str) -> PathBuf {
    out.join("tests").join(safe_id(focal_id)).join(format!("{key}.rs"))
}

fn run_focal(sh: &Shared<'_>, focal: &FocalMethod, fp: String) -> Result<Outcome, SessionError> {
    let path = record_path(sh.out, &focal.id);
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(rec) = serde_json::from_str::<FocalRecord>(&text) {
            if rec.fingerprint == fp && rec.status != FocalStatus::Truncated {
                return Ok(Outcome::Skipped);
            }
        }
    }
    if sh.stop.load(Ordering::SeqCst) {
        return Ok(Outcome::Skipped);
    }
    let started = Instant::now();
    let mut record = FocalRecord {
        focal_id: focal.id.clone(),
        fingerprint: fp,
        status: FocalStatus::Completed,
        minimized: Vec::new(),
        occurrence_bound: None,
        artifacts: Vec::new(),
        error: None,
    };
    let mut transcript = Transcript { focal_id: focal.id.clone(), tests: Vec::new() };

    match plan_focal(focal, sh.model, sh.cfg, sh.template) {
        Err(e) => {
            record.status = FocalStatus::Failed;
            record.error = Some(e.to_string());
        }
        Ok(plan) => {
            record.minimized = plan.minimized;
            record.occurrence_bound = plan.occurrence_bound;
            for t in plan.tests {
                if sh.stop.load(Ordering::SeqCst) {
                    record.status = FocalStatus::Truncated;
                    break;
                }
                match run_test(sh, focal, &t)? {
                    TestRun::Done(artifact, tr) => {
                        record.artifacts.push(*artifact);
                        transcript.tests.push(*tr);
                    }
                    TestRun::Stop(status, why, tr, artifact) => {
                        if let Some(a) = artifact {
                            record.artifacts.push(*a);
                        }
                        transcript.tests.push(*tr);
                        record.status = status;
                        record.error = Some(why);
                        if status == FocalStatus::Truncated {
                            sh.stop.store(true, Ordering::SeqCst);
                        }
                        break;
                    }
                }
            }
        }
    }

    let dir = sh.out.join("tests").join(safe_id(&focal.id));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    for a in &record.artifacts {
        write_atomic(&test_path(sh.out, &focal.id, &key_of(a)), &a.source)?;
    }
    write_atomic(&sh.out.join("transcripts").join(format!("{}.json", safe_id(&focal.id))), &pretty_json(&transcript))?;
    write_atomic(&path, &pretty_json(&record))?;
    sh.time(&focal.id, "focal", started);
    Ok(Outcome::Done(record.status))
}

/// Key of an artifact, recovered from its test id.
pub fn key_of(a: &TestArtifact) -> String {
    test_key(&PlanEntry { path_id: a.path_id, kind: a.kind, step: a.step })
}

enum TestRun {
    Done(Box<TestArtifact>, Box<TestTranscript>),
    Stop(FocalStatus, String, Box<TestTranscript>, Option<Box<TestArtifact>>),
}

fn gateway_stop(e: &GatewayError) -> FocalStatus {
    match e {
        GatewayError::BudgetExhausted { .. } => FocalStatus::Truncated,
        _ => FocalStatus::Failed,
    }
}

fn runner_failure(e: BuildError, mut tr: TestTranscript, artifact: TestArtifact) -> Result<TestRun, SessionError> {
    tr.error = Some(format!("runner: {e}"));
    Ok(TestRun::Stop(FocalStatus::Failed, format!("runner: {e}"), Box::new(tr), Some(Box::new(artifact))))
}

fn run_test(sh: &Shared<'_>, focal: &FocalMethod, t: &PlannedTest) -> Result<TestRun, SessionError> {
    let test_id = format!("{}/{}", focal.id, t.key);
    let test_file = format!("{}__{}.rs", safe_id(&focal.id), t.key);
    let mut tr = TestTranscript {
        test_id: test_id.clone(),
        request: t.request.clone(),
        response: None,
        error: None,
        first_build: Vec::new(),
        repairs: Vec::new(),
        run: Vec::new(),
    };
    let response = match sh.gateway.complete(&t.request) {
        Ok(r) => r,
        Err(e) => {
            tr.error = Some(e.to_string());
            return Ok(TestRun::Stop(gateway_stop(&e), format!("gateway: {e}"), Box::new(tr), None));
        }
    };
    tr.response = Some(response.text.clone());
    let mut artifact = TestArtifact {
        test_id,
        focal_id: focal.id.clone(),
        path_id: t.entry.path_id,
        kind: t.entry.kind,
        step: t.entry.step,
        source: String::new(),
        status: TestStatus::Generated,
        repair_rounds_used: 0,
        tokens_in: response.input_tokens,
        tokens_out: response.output_tokens,
        cause: None,
    };
    match extract_code(&response.text) {
        Ok(code) => {
            artifact.source = code;
            if !artifact.source.ends_with('\n') {
                artifact.source.push('\n');
            }
        }
        Err(e) => {
            let _ = artifact.advance(TestStatus::Unrepairable);
            artifact.cause = Some(e.to_string());
            return Ok(TestRun::Done(Box::new(artifact), Box::new(tr)));
        }
    }

    let started = Instant::now();
    let build = match sh.runner.compile(&test_file, &artifact.source) {
        Ok(b) => b,
        Err(e) => return runner_failure(e, tr, artifact),
    };
    sh.time(&focal.id, "compile", started);
    tr.first_build = build.diagnostics.clone();
    if build.success {
        let _ = artifact.advance(TestStatus::Compiled);
    } else {
        let budget = sh.cfg.generation.repair_budget()?;
        let mut compiler = RunnerCompiler(sh.runner);
        let outcome = repair_test(artifact, build, &test_file, &mut compiler, sh.gateway, budget);
        artifact = outcome.artifact;
        tr.repairs = outcome.exchanges;
        if artifact.status == TestStatus::Unrepairable {
            if let Err(e) = sh.runner.discard(&test_file) {
                return runner_failure(e, tr, artifact);
            }
            let cause = artifact.cause.clone().unwrap_or_default();
            if outcome.budget_exhausted {
                return Ok(TestRun::Stop(FocalStatus::Truncated, cause, Box::new(tr), Some(Box::new(artifact))));
            }
            if cause.starts_with("gateway:") || cause.starts_with("build:") {
                return Ok(TestRun::Stop(FocalStatus::Failed, cause, Box::new(tr), Some(Box::new(artifact))));
            }
            return Ok(TestRun::Done(Box::new(artifact), Box::new(tr)));
        }
    }

    let started = Instant::now();
    let stem = test_file.trim_end_matches(".rs");
    let run = match sh.runner.run_tests(stem) {
        Ok(r) => r,
        Err(e) => return runner_failure(e, tr, artifact),
    };
    sh.time(&focal.id, "run", started);
    let all_passed = !run.results.is_empty() && run.results.iter().all(|r| r.status == RunStatus::Passed);
    if all_passed {
        let _ = artifact.advance(TestStatus::Passed);
    } else {
        let _ = artifact.advance(TestStatus::Failed);
        artifact.cause = Some(match run.results.iter().find(|r| r.status != RunStatus::Passed) {
            Some(r) => format!("{}: {:?}", r.name, r.status),
            None => "no test ran".into(),
        });
    }
    tr.run = run.results;
    Ok(TestRun::Done(Box::new(artifact), Box::new(tr)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys() {
        let e = |path_id, kind, step| PlanEntry { path_id, kind, step };
        assert_eq!(test_key(&e(4, TestKind::Path, None)), "p4");
        assert_eq!(test_key(&e(0, TestKind::BoundaryLow, Some(1))), "p0-s1-low");
        assert_eq!(test_key(&e(2, TestKind::BoundaryHigh, Some(0))), "p2-s0-high");
    }
}
