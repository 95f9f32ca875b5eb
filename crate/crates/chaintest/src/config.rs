//! Session configuration file.
//!
//! Provider settings sit at the top level; `runner` and `generation` are
//! optional sections:
//!
//! ```json
//! { "provider": "mock", "rpm": 60, "max_concurrent": 4, "token_budget": 200000,
//!   "runner": { "compile_cmd": "cargo test --no-run --message-format=json --test {test_name}" },
//!   "generation": { "max_tests_per_focal": 16 } }
//! ```

use std::path::{Path, PathBuf};

use chaintest_core::paths::TraversalConfig;
use chaintest_core::repair::RepairBudget;
use serde::{Deserialize, Serialize};

use crate::dump::{read_json, DumpError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    Mock,
}

fn default_api_key_env() -> String {
    "PALM_API_KEY".into()
}
fn default_max_concurrent() -> usize {
    4
}
fn default_retry_base_ms() -> u64 {
    1000
}
fn default_max_attempts() -> u32 {
    5
}
fn default_request_timeout_s() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    /// Requests per minute; absent or 0 means unthrottled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rpm: Option<u32>,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent: usize,
    /// Session-wide token budget; absent means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_budget: Option<u64>,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_request_timeout_s")]
    pub request_timeout_s: u64,
    /// Mock script, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<PathBuf>,
}

fn default_build_timeout() -> u64 {
    300
}
fn default_test_timeout() -> u64 {
    60
}
fn default_diagnostic_format() -> String {
    "json-lines".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerConfig {
    /// Crate the tests are built in, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workspace: Option<PathBuf>,
    #[serde(default)]
    pub compile_cmd: String,
    #[serde(default)]
    pub test_cmd: String,
    #[serde(default)]
    pub coverage_cmd: String,
    #[serde(default = "default_diagnostic_format")]
    pub diagnostic_format: String,
    #[serde(default = "default_build_timeout")]
    pub build_timeout_s: u64,
    #[serde(default = "default_test_timeout")]
    pub test_timeout_s: u64,
    /// Scripted outcomes instead of a real toolchain, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stub: Option<PathBuf>,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        RunnerConfig {
            workspace: None,
            compile_cmd: String::new(),
            test_cmd: String::new(),
            coverage_cmd: String::new(),
            diagnostic_format: default_diagnostic_format(),
            build_timeout_s: default_build_timeout(),
            test_timeout_s: default_test_timeout(),
            stub: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub max_tests_per_focal: usize,
    pub max_output_tokens: u32,
    pub context_budget_tokens: usize,
    pub max_occurrences_per_site: u32,
    pub max_paths: usize,
    pub max_errors: u32,
    pub max_iterations: u32,
    /// Only these function ids; all when empty.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub focal: Vec<String>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            max_tests_per_focal: 16,
            max_output_tokens: 1024,
            context_budget_tokens: 2048,
            max_occurrences_per_site: 2,
            max_paths: 4096,
            max_errors: 10,
            max_iterations: 3,
            focal: Vec::new(),
        }
    }
}

impl GenerationConfig {
    pub fn traversal(&self) -> TraversalConfig {
        TraversalConfig { max_occurrences_per_site: self.max_occurrences_per_site, max_paths: self.max_paths }
    }

    pub fn repair_budget(&self) -> Result<RepairBudget, ConfigError> {
        RepairBudget::new(self.max_errors, self.max_iterations)
            .ok_or_else(|| ConfigError::Invalid("max_errors and max_iterations must be at least 1".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(flatten)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub runner: RunnerConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Read(#[from] DumpError),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

impl SessionConfig {
    /// Load `path`, resolving relative file references against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: SessionConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        rebase(&mut cfg.provider.mock_script);
        rebase(&mut cfg.runner.stub);
        rebase(&mut cfg.runner.workspace);
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.provider.max_concurrent == 0 {
            return Err(ConfigError::Invalid("max_concurrent must be at least 1".into()));
        }
        if self.provider.max_attempts == 0 {
            return Err(ConfigError::Invalid("max_attempts must be at least 1".into()));
        }
        if self.generation.max_output_tokens == 0 {
            return Err(ConfigError::Invalid("max_output_tokens must be at least 1".into()));
        }
        if self.generation.max_occurrences_per_site == 0 {
            return Err(ConfigError::Invalid("max_occurrences_per_site must be at least 1".into()));
        }
        self.generation.repair_budget()?;
        if self.provider.provider == ProviderKind::Http && self.provider.endpoint.is_none() {
            return Err(ConfigError::Invalid("http provider needs an endpoint".into()));
        }
        Ok(())
    }

    /// The parts of the configuration that change what a session produces.
    /// Throttling, budgets and retry pacing are left out.
    pub fn fingerprint_view(&self) -> serde_json::Value {
        serde_json::json!({
            "provider": self.provider.provider,
            "endpoint": self.provider.endpoint,
            "model": self.provider.model,
            "runner": {
                "compile_cmd": self.runner.compile_cmd,
                "test_cmd": self.runner.test_cmd,
                "diagnostic_format": self.runner.diagnostic_format,
            },
            "generation": self.generation,
        })
    }
}
