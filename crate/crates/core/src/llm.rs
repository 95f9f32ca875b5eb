//! Provider-neutral chat-completion types.
//!
//! Providers, retries and throttling are implemented by the std crate; the
//! core only needs the [`ChatModel`] seam to drive generation and repair.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::util::ceil_div;

pub const GENERATION_TEMPERATURE: f32 = 0.2;
pub const REPAIR_TEMPERATURE: f32 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub max_output_tokens: u32,
    pub temperature: f32,
    pub request_tag: String,
}

impl ChatRequest {
    pub fn check(&self) -> Result<(), GatewayError> {
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest("temperature must lie in [0, 2]".into()));
        }
        Ok(())
    }

    /// Worst-case token cost: estimated input plus the full output allowance.
    pub fn estimated_tokens(&self) -> u64 {
        estimate_text_tokens(&self.system) + estimate_text_tokens(&self.user) + self.max_output_tokens as u64
    }
}

/// One token per four characters, rounded up.
pub fn estimate_text_tokens(text: &str) -> u64 {
    ceil_div(text.chars().count(), 4) as u64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub provider_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("provider unavailable after {attempts} attempts: {last}")]
    ProviderUnavailable { attempts: u32, last: String },
    #[error("token budget exhausted: request needs {requested}, {remaining} left")]
    BudgetExhausted { requested: u64, remaining: u64 },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

pub trait ChatModel {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

impl<M: ChatModel + ?Sized> ChatModel for &M {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(req)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("response contains no code")]
pub struct EmptyExtraction;

/// Code from a model response.
///
/// Fenced blocks, if any, are concatenated in order (an unterminated fence
/// runs to the end of the text). Unfenced text is returned trimmed, but only
/// when it looks like Rust items at all; pure prose is rejected.
pub fn extract_code(text: &str) -> Result<String, EmptyExtraction> {
    let mut blocks: Vec<String> = Vec::new();
    let mut current: Option<String> = None;
    let mut saw_fence = false;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            saw_fence = true;
            match current.take() {
                Some(block) => blocks.push(block),
                None => current = Some(String::new()),
            }
            continue;
        }
        if let Some(block) = current.as_mut() {
            block.push_str(line);
            block.push('\n');
        }
    }
    if let Some(block) = current {
        blocks.push(block);
    }

    let code = if saw_fence {
        let mut out = String::new();
        for b in blocks.iter().map(|b| b.trim_matches('\n')).filter(|b| !b.trim().is_empty()) {
            if !out.is_empty() {
                out.push_str("\n\n");
            }
            out.push_str(b.trim_end());
        }
        out
    } else {
        let t = text.trim();
        if !looks_like_code(t) {
            return Err(EmptyExtraction);
        }
        t.into()
    };
    if code.trim().is_empty() {
        return Err(EmptyExtraction);
    }
    Ok(code)
}

fn looks_like_code(text: &str) -> bool {
    const MARKERS: [&str; 8] = ["fn ", "#[", "use ", "mod ", "impl ", "struct ", "let ", "assert"];
    text.lines().any(|l| {
        let l = l.trim_start();
        MARKERS.iter().any(|m| l.starts_with(m)) || l.starts_with("pub ")
    })
}
