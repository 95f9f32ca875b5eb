//! Program-model dumps and canonical JSON.

use std::path::Path;

use chaintest_core::ProgramModel;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DumpError> {
    let text = std::fs::read_to_string(path).map_err(|source| DumpError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|e| DumpError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn load_model(path: &Path) -> Result<ProgramModel, DumpError> {
    read_json(path)
}

/// Sorted keys, no insignificant whitespace.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    // serde_json's map is ordered by key unless `preserve_order` is enabled,
    // so a round trip through `Value` sorts every object.
    let v = serde_json::to_value(value).expect("serializable value");
    serde_json::to_string(&v).expect("json value")
}

/// Pretty JSON with sorted keys and a trailing newline, for files people read.
pub fn pretty_json<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    let mut s = serde_json::to_string_pretty(&v).expect("json value");
    s.push('\n');
    s
}

pub fn sha256_hex(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

/// File-system friendly form of a function id (`imp::wait` -> `imp__wait`).
pub fn safe_id(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form_sorts_keys() {
        let v: serde_json::Value = serde_json::from_str(r#"{ "b": 1, "a": { "d": [1, 2], "c": null } }"#).unwrap();
        assert_eq!(canonical_json(&v), r#"{"a":{"c":null,"d":[1,2]},"b":1}"#);
    }

    #[test]
    fn safe_ids() {
        assert_eq!(safe_id("imp::wait"), "imp__wait");
        assert_eq!(safe_id("Counter<T>::get"), "Counter_T___get");
    }

    #[test]
    fn hash_separates_parts() {
        assert_ne!(sha256_hex(&["ab", "c"]), sha256_hex(&["a", "bc"]));
    }
}
