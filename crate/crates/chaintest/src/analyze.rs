//! The `analyze` and `minimize` file formats.

use std::path::{Path, PathBuf};

use chaintest_core::cover::{coverage_report, minimize};
use chaintest_core::paths::{enumerate_paths, PathError, TraversalConfig};
use chaintest_core::validate::{validate_model, ValidationIssue};
use chaintest_core::{ConditionChain, ControlFlowGraph, ProgramModel};
use serde::{Deserialize, Serialize};

use crate::dump::{pretty_json, safe_id};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainsFile {
    pub focal_id: String,
    pub paths: Vec<ConditionChain>,
    /// Occurrence bound actually used; lower than configured when the path
    /// budget forced a retry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occurrence_bound: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_ratio: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum AnalyzeError {
    #[error("program model has {} validation issue(s)", .0.len())]
    Invalid(Vec<ValidationIssue>),
    #[error("{focal}: {source}")]
    Paths { focal: String, source: PathError },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Enumerate with `config`; if the path budget is exceeded, retry once with
/// a single evaluation per site. Returns the chains and the bound used.
pub fn chains_with_fallback(cfg: &ControlFlowGraph, config: &TraversalConfig) -> Result<(Vec<ConditionChain>, u32), PathError> {
    match enumerate_paths(cfg, config) {
        Err(PathError::PathBudgetExceeded(_)) if config.max_occurrences_per_site > 1 => {
            let narrow = TraversalConfig { max_occurrences_per_site: 1, ..*config };
            enumerate_paths(cfg, &narrow).map(|c| (c, 1))
        }
        other => other.map(|c| (c, config.max_occurrences_per_site)),
    }
}

/// Write one chains file per function into `out_dir`.
pub fn analyze(model: &ProgramModel, out_dir: &Path, config: &TraversalConfig) -> Result<Vec<PathBuf>, AnalyzeError> {
    let issues = validate_model(model);
    if !issues.is_empty() {
        return Err(AnalyzeError::Invalid(issues));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for f in &model.functions {
        let (paths, bound) =
            chains_with_fallback(&f.cfg, config).map_err(|source| AnalyzeError::Paths { focal: f.id.clone(), source })?;
        let file = ChainsFile {
            focal_id: f.id.clone(),
            paths,
            occurrence_bound: (bound != config.max_occurrences_per_site).then_some(bound),
            coverage_ratio: None,
        };
        let path = out_dir.join(format!("{}.json", safe_id(&f.id)));
        std::fs::write(&path, pretty_json(&file))?;
        written.push(path);
    }
    Ok(written)
}

pub fn minimize_file(input: &ChainsFile) -> ChainsFile {
    let selected = minimize(&input.paths);
    let ratio = coverage_report(&selected, &input.paths).ratio;
    ChainsFile {
        focal_id: input.focal_id.clone(),
        paths: selected,
        occurrence_bound: input.occurrence_bound,
        coverage_ratio: Some(ratio),
    }
}
