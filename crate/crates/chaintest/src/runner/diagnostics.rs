//! Decoding of rustc/cargo JSON diagnostics (one object per line).

use chaintest_core::build::{Diagnostic, Severity};
use serde_json::Value;

/// Decode a json-lines diagnostic stream.
///
/// Accepts both cargo's `compiler-message` envelopes and bare rustc
/// diagnostics; other cargo records are skipped. Any line that is not JSON
/// makes the whole stream malformed.
pub fn parse_json_lines(text: &str) -> Result<Vec<Diagnostic>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        let msg = match v.get("reason").and_then(Value::as_str) {
            Some("compiler-message") => v.get("message").ok_or_else(|| format!("line {}: no message", i + 1))?,
            Some(_) => continue,
            None if v.get("level").is_some() => &v,
            None => return Err(format!("line {}: not a diagnostic", i + 1)),
        };
        if let Some(d) = decode(msg) {
            out.push(d);
        }
    }
    Ok(out)
}

fn decode(msg: &Value) -> Option<Diagnostic> {
    let message = msg.get("message").and_then(Value::as_str).unwrap_or_default().to_string();
    let level = match msg.get("level").and_then(Value::as_str).unwrap_or("error") {
        l if l.starts_with("error") => Severity::Error,
        "warning" => Severity::Warning,
        "help" => Severity::Help,
        _ => Severity::Note,
    };
    let spans = msg.get("spans").and_then(Value::as_array).map(Vec::as_slice).unwrap_or(&[]);
    // The closing "aborting due to ..." summary is not an error of its own.
    if spans.is_empty() && (message.starts_with("aborting due to") || message.starts_with("could not compile")) {
        return None;
    }
    let span = spans
        .iter()
        .find(|s| s.get("is_primary").and_then(Value::as_bool).unwrap_or(false))
        .or(spans.first());
    let num = |s: Option<&Value>, k: &str| s.and_then(|s| s.get(k)).and_then(Value::as_u64).unwrap_or(0) as u32;
    Some(Diagnostic {
        code: msg.pointer("/code/code").and_then(Value::as_str).unwrap_or_default().to_string(),
        message,
        file: span.and_then(|s| s.get("file_name")).and_then(Value::as_str).unwrap_or_default().to_string(),
        line: num(span, "line_start"),
        column: num(span, "column_start"),
        level,
    })
}
