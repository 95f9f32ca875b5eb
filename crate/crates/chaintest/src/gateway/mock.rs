use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use chaintest_core::llm::{estimate_text_tokens, ChatRequest, ChatResponse};
use globset::{Glob, GlobMatcher};
use serde::{Deserialize, Serialize};

use super::{Provider, ProviderError};
use crate::config::ConfigError;
use crate::dump::read_json;

/// One scripted reply. The first entry whose glob matches the request tag
/// answers; it fails transiently `fail_times` times per tag first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub match_tag: String,
    pub respond: String,
    #[serde(default)]
    pub fail_times: u32,
}

pub struct MockProvider {
    entries: Vec<(GlobMatcher, ScriptEntry)>,
    failures: Mutex<HashMap<(usize, String), u32>>,
}

impl MockProvider {
    pub fn new(entries: Vec<ScriptEntry>) -> Result<Self, ConfigError> {
        let entries = entries
            .into_iter()
            .map(|e| {
                let g = Glob::new(&e.match_tag)
                    .map_err(|err| ConfigError::Invalid(format!("mock tag pattern `{}`: {err}", e.match_tag)))?;
                Ok((g.compile_matcher(), e))
            })
            .collect::<Result<_, ConfigError>>()?;
        Ok(MockProvider { entries, failures: Mutex::default() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        MockProvider::new(read_json(path)?)
    }
}

impl Provider for MockProvider {
    fn id(&self) -> &str {
        "mock"
    }

    fn call(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let (idx, entry) = self
            .entries
            .iter()
            .enumerate()
            .find(|(_, (g, _))| g.is_match(&req.request_tag))
            .map(|(i, (_, e))| (i, e))
            .ok_or_else(|| ProviderError::Fatal(format!("no scripted reply for tag `{}`", req.request_tag)))?;
        {
            let mut failures = self.failures.lock().unwrap();
            let n = failures.entry((idx, req.request_tag.clone())).or_insert(0);
            if *n < entry.fail_times {
                *n += 1;
                return Err(ProviderError::Transient(format!("scripted failure {} of {}", *n, entry.fail_times)));
            }
        }
        Ok(ChatResponse {
            text: entry.respond.clone(),
            input_tokens: estimate_text_tokens(&req.system) + estimate_text_tokens(&req.user),
            output_tokens: estimate_text_tokens(&entry.respond),
            provider_id: "mock".into(),
        })
    }
}
