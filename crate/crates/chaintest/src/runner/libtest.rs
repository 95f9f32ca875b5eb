//! Decoding of libtest's plain-text report.

use std::collections::BTreeMap;

use chaintest_core::build::{RunStatus, TestResult};

/// Per-test results from `cargo test` output.
///
/// A failed test whose captured output mentions an assertion counts as
/// `Failed`; any other failure is a `Panicked` test. Ignored tests are left
/// out.
pub fn parse(stdout: &str) -> Vec<TestResult> {
    let mut results: Vec<TestResult> = Vec::new();
    let mut sections: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<String> = None;
    for line in stdout.lines() {
        if let Some(rest) = line.strip_prefix("---- ") {
            current = rest.strip_suffix(" stdout ----").map(str::to_string);
            continue;
        }
        if line == "failures:" || line.starts_with("test result:") {
            current = None;
        }
        if let Some(name) = &current {
            let body = sections.entry(name.clone()).or_default();
            body.push_str(line);
            body.push('\n');
            continue;
        }
        let Some(rest) = line.strip_prefix("test ") else { continue };
        let Some((name, verdict)) = rest.rsplit_once(" ... ") else { continue };
        let status = match verdict.trim() {
            "ok" => RunStatus::Passed,
            "FAILED" => RunStatus::Failed,
            v if v.starts_with("ignored") => continue,
            _ => continue,
        };
        results.push(TestResult { name: name.to_string(), status });
    }
    for r in &mut results {
        if r.status == RunStatus::Failed {
            let body = sections.get(&r.name).map(String::as_str).unwrap_or("");
            if !body.contains("assertion") {
                r.status = RunStatus::Panicked;
            }
        }
    }
    results
}

/// Tests libtest announced as slow ("has been running for over 60
/// seconds"); used to attribute a timeout.
pub fn started(stdout: &str) -> Vec<String> {
    stdout
        .lines()
        .filter_map(|l| l.strip_prefix("test ")?.strip_suffix(" has been running for over 60 seconds"))
        .map(str::to_string)
        .collect()
}
