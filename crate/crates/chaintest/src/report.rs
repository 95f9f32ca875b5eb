//! Rebuilding `report.json` and `report.md` from a session directory.

use std::path::Path;

use chaintest_core::build::CoverageOutcome;
use chaintest_core::metrics::{aggregate, render_markdown, MetricsRow, SessionReport};
use chaintest_core::TestArtifact;

use crate::dump::pretty_json;
use crate::session::{key_of, load_records, test_path, CoverageFile, SessionIndex};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{0}: no session found")]
    Missing(String),
    #[error("{path}: unreadable session index: {message}")]
    Index { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn check_sources(dir: &Path, artifacts: &[TestArtifact]) -> Result<(), String> {
    for a in artifacts {
        let path = test_path(dir, &a.focal_id, &key_of(a));
        match std::fs::read_to_string(&path) {
            Ok(s) if s == a.source => {}
            Ok(_) => return Err(format!("test source {} differs from its record", path.display())),
            Err(e) => return Err(format!("{}: {e}", path.display())),
        }
    }
    Ok(())
}

/// Fold the stored records of a session into a report.
///
/// A record that does not parse, or whose test sources on disk no longer
/// match it, yields an invalid row and is left out of the crate totals.
pub fn build_report(dir: &Path) -> Result<SessionReport, ReportError> {
    let index_path = dir.join("session.json");
    let text = match std::fs::read_to_string(&index_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ReportError::Missing(dir.display().to_string()));
        }
        Err(source) => return Err(ReportError::Io { path: index_path.display().to_string(), source }),
    };
    let index: SessionIndex = serde_json::from_str(&text)
        .map_err(|e| ReportError::Index { path: index_path.display().to_string(), message: e.to_string() })?;

    let coverage: Option<CoverageOutcome> = std::fs::read_to_string(dir.join("coverage.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<CoverageFile>(&t).ok())
        .and_then(|c| match c {
            CoverageFile::Measured(c) => Some(c),
            CoverageFile::Missing { .. } => None,
        });

    let mut valid: Vec<TestArtifact> = Vec::new();
    let mut rows: Vec<MetricsRow> = Vec::new();
    for (id, rec) in load_records(dir, &index.focal) {
        let rec = rec.and_then(|r| {
            if r.focal_id != id {
                return Err(format!("record names focal method `{}`", r.focal_id));
            }
            check_sources(dir, &r.artifacts).map(|_| r)
        });
        match rec {
            Ok(r) => {
                let mut focal_rows = aggregate(&id, &r.artifacts, None).rows;
                rows.push(focal_rows.swap_remove(0));
                valid.extend(r.artifacts);
            }
            Err(why) => rows.push(MetricsRow::invalid(&id, why)),
        }
    }
    let mut crate_row = aggregate(&index.crate_name, &valid, coverage.as_ref()).rows;
    let mut all = vec![crate_row.swap_remove(0)];
    all.extend(rows);
    Ok(SessionReport { rows: all, truncated: index.truncated })
}

pub fn render_json(report: &SessionReport) -> String {
    pretty_json(report)
}

/// Build the report and store both renderings in `dir`.
pub fn write_reports(dir: &Path) -> Result<SessionReport, ReportError> {
    let report = build_report(dir)?;
    for (name, text) in [("report.json", render_json(&report)), ("report.md", render_markdown(&report))] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|source| ReportError::Io { path: path.display().to_string(), source })?;
    }
    Ok(report)
}
