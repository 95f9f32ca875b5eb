//! Chat-completion gateway: retries with exponential backoff, a shared
//! concurrency and requests-per-minute throttle, and a session token budget
//! in front of a pluggable provider.

mod http;
mod mock;
mod throttle;

use std::sync::{Arc, Mutex};
use std::time::Duration;

use chaintest_core::llm::{ChatModel, ChatRequest, ChatResponse, GatewayError};
use serde::{Deserialize, Serialize};

pub use http::HttpProvider;
pub use mock::{MockProvider, ScriptEntry};
pub use throttle::{Permit, Throttle};

use crate::config::{ConfigError, ProviderConfig, ProviderKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    /// Worth retrying: timeouts, rate limits, server errors.
    #[error("transient: {0}")]
    Transient(String),
    #[error("{0}")]
    Fatal(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

pub trait Provider: Send + Sync {
    fn id(&self) -> &str;
    fn call(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: u32,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { base: Duration::from_secs(1), factor: 2, max_attempts: 5 }
    }
}

impl RetryPolicy {
    /// Pause after the `failed`-th failed attempt (1-based).
    pub fn delay(&self, failed: u32) -> Duration {
        self.base * self.factor.saturating_pow(failed.saturating_sub(1))
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    /// Completed requests.
    pub requests: u64,
    /// Provider calls, including failed attempts.
    pub attempts: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Default)]
struct Budget {
    limit: Option<u64>,
    spent: u64,
    reserved: u64,
}

pub struct Gateway {
    provider: Box<dyn Provider>,
    retry: RetryPolicy,
    sleeper: Sleeper,
    throttle: Throttle,
    budget: Mutex<Budget>,
    totals: Mutex<Totals>,
}

impl Gateway {
    pub fn new(provider: Box<dyn Provider>, retry: RetryPolicy, throttle: Throttle, token_budget: Option<u64>) -> Self {
        Gateway {
            provider,
            retry,
            sleeper: Arc::new(std::thread::sleep),
            throttle,
            budget: Mutex::new(Budget { limit: token_budget, ..Default::default() }),
            totals: Mutex::new(Totals::default()),
        }
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, ConfigError> {
        let provider: Box<dyn Provider> = match cfg.provider {
            ProviderKind::Mock => {
                let path = cfg
                    .mock_script
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("mock provider needs a mock script".into()))?;
                Box::new(MockProvider::load(path)?)
            }
            ProviderKind::Http => {
                let key = std::env::var(&cfg.api_key_env).map_err(|_| ConfigError::MissingApiKey(cfg.api_key_env.clone()))?;
                let endpoint = cfg.endpoint.clone().ok_or_else(|| ConfigError::Invalid("http provider needs an endpoint".into()))?;
                Box::new(HttpProvider::new(endpoint, cfg.model.clone().unwrap_or_default(), key, Duration::from_secs(cfg.request_timeout_s)))
            }
        };
        let retry = RetryPolicy { base: Duration::from_millis(cfg.retry_base_ms), factor: 2, max_attempts: cfg.max_attempts };
        let rpm = cfg.rpm.filter(|&r| r > 0);
        Ok(Gateway::new(provider, retry, Throttle::new(cfg.max_concurrent, rpm, Duration::from_secs(60)), cfg.token_budget))
    }

    pub fn totals(&self) -> Totals {
        *self.totals.lock().unwrap()
    }

    /// Tokens left in the session budget, if there is one.
    pub fn remaining(&self) -> Option<u64> {
        let b = self.budget.lock().unwrap();
        b.limit.map(|l| l.saturating_sub(b.spent + b.reserved))
    }

    fn reserve(&self, need: u64) -> Result<(), GatewayError> {
        let mut b = self.budget.lock().unwrap();
        if let Some(limit) = b.limit {
            let remaining = limit.saturating_sub(b.spent + b.reserved);
            if need > remaining {
                return Err(GatewayError::BudgetExhausted { requested: need, remaining });
            }
        }
        b.reserved += need;
        Ok(())
    }

    fn settle(&self, reserved: u64, used: u64) {
        let mut b = self.budget.lock().unwrap();
        b.reserved -= reserved;
        b.spent += used;
    }
}

impl ChatModel for Gateway {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.check()?;
        let need = req.estimated_tokens();
        self.reserve(need)?;
        let mut failed = 0;
        let result = loop {
            let outcome = {
                let _permit = self.throttle.acquire();
                self.totals.lock().unwrap().attempts += 1;
                self.provider.call(req)
            };
            match outcome {
                Ok(r) => break Ok(r),
                Err(ProviderError::Transient(msg)) => {
                    failed += 1;
                    if failed >= self.retry.max_attempts {
                        break Err(GatewayError::ProviderUnavailable { attempts: failed, last: msg });
                    }
                    (self.sleeper)(self.retry.delay(failed));
                }
                Err(ProviderError::Fatal(msg)) => {
                    break Err(GatewayError::ProviderUnavailable { attempts: failed + 1, last: msg })
                }
                Err(ProviderError::Malformed(msg)) => break Err(GatewayError::MalformedResponse(msg)),
            }
        };
        let used = result.as_ref().map_or(0, |r| r.input_tokens + r.output_tokens);
        self.settle(need, used);
        if let Ok(r) = &result {
            let mut t = self.totals.lock().unwrap();
            t.requests += 1;
            t.input_tokens += r.input_tokens;
            t.output_tokens += r.output_tokens;
        }
        result
    }
}
