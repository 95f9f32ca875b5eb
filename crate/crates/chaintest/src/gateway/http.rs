use std::time::Duration;

use chaintest_core::llm::{estimate_text_tokens, ChatRequest, ChatResponse};
use serde_json::{json, Value};

use super::{Provider, ProviderError};

/// OpenAI-compatible `chat/completions` endpoint.
pub struct HttpProvider {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: String,
    id: String,
}

impl HttpProvider {
    pub fn new(endpoint: String, model: String, api_key: String, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        let id = format!("http:{model}");
        HttpProvider { agent, endpoint, model, api_key, id }
    }
}

impl Provider for HttpProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn call(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let body = json!({
            "model": self.model,
            "messages": [
                { "role": "system", "content": req.system },
                { "role": "user", "content": req.user },
            ],
            "max_tokens": req.max_output_tokens,
            "temperature": req.temperature,
        });
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| ProviderError::Transient(e.to_string()))?;
        match status {
            200..=299 => {}
            408 | 429 | 500..=599 => return Err(ProviderError::Transient(format!("HTTP {status}"))),
            _ => return Err(ProviderError::Fatal(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()))),
        }
        parse_completion(&text, req, &self.id)
    }
}

fn parse_completion(text: &str, req: &ChatRequest, provider_id: &str) -> Result<ChatResponse, ProviderError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ProviderError::Malformed(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderError::Malformed("no choices[0].message.content".into()))?;
    let input = v.pointer("/usage/prompt_tokens").and_then(Value::as_u64);
    let output = v.pointer("/usage/completion_tokens").and_then(Value::as_u64);
    Ok(ChatResponse {
        text: content.to_string(),
        input_tokens: input.unwrap_or_else(|| estimate_text_tokens(&req.system) + estimate_text_tokens(&req.user)),
        output_tokens: output.unwrap_or_else(|| estimate_text_tokens(content)),
        provider_id: provider_id.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ChatRequest {
        ChatRequest { system: "s".into(), user: "u".into(), max_output_tokens: 5, temperature: 0.0, request_tag: "t".into() }
    }

    #[test]
    fn completion_body() {
        let r = parse_completion(
            r#"{"choices":[{"message":{"role":"assistant","content":"fn t(){}"}}],"usage":{"prompt_tokens":12,"completion_tokens":4}}"#,
            &req(),
            "http:m",
        )
        .unwrap();
        assert_eq!((r.text.as_str(), r.input_tokens, r.output_tokens), ("fn t(){}", 12, 4));
        assert!(matches!(parse_completion(r#"{"choices":[]}"#, &req(), "p"), Err(ProviderError::Malformed(_))));
        assert!(matches!(parse_completion("<html>", &req(), "p"), Err(ProviderError::Malformed(_))));
    }
}
