//! Coverage summaries: `llvm-cov export` JSON or LCOV tracefiles.

use chaintest_core::build::CoverageOutcome;
use serde_json::Value;

use super::CoverageFailure;

pub fn parse(text: &str) -> Result<CoverageOutcome, CoverageFailure> {
    let t = text.trim_start();
    let cov = if t.starts_with('{') { parse_llvm_json(t)? } else { parse_lcov(t)? };
    cov.check()?;
    Ok(cov)
}

fn parse_llvm_json(text: &str) -> Result<CoverageOutcome, CoverageFailure> {
    let v: Value = serde_json::from_str(text).map_err(|e| CoverageFailure::Parse(e.to_string()))?;
    let data = v.get("data").and_then(Value::as_array).ok_or_else(|| CoverageFailure::Parse("no `data` array".into()))?;
    let mut cov = CoverageOutcome::default();
    for d in data {
        let totals = d.get("totals").ok_or_else(|| CoverageFailure::Parse("no `totals`".into()))?;
        let get = |section: &str, key: &str| totals.pointer(&format!("/{section}/{key}")).and_then(Value::as_u64);
        cov.lines_total += get("lines", "count").ok_or_else(|| CoverageFailure::Parse("no line totals".into()))?;
        cov.lines_covered += get("lines", "covered").unwrap_or(0);
        cov.branches_total += get("branches", "count").unwrap_or(0);
        cov.branches_covered += get("branches", "covered").unwrap_or(0);
    }
    Ok(cov)
}

fn parse_lcov(text: &str) -> Result<CoverageOutcome, CoverageFailure> {
    let mut cov = CoverageOutcome::default();
    let mut records = 0;
    for line in text.lines() {
        let Some((key, val)) = line.trim().split_once(':') else { continue };
        let slot = match key {
            "LF" => &mut cov.lines_total,
            "LH" => &mut cov.lines_covered,
            "BRF" => &mut cov.branches_total,
            "BRH" => &mut cov.branches_covered,
            _ => continue,
        };
        *slot += val.trim().parse::<u64>().map_err(|e| CoverageFailure::Parse(format!("{key}: {e}")))?;
        records += 1;
    }
    if records == 0 {
        return Err(CoverageFailure::Parse("no LCOV summary records".into()));
    }
    Ok(cov)
}
