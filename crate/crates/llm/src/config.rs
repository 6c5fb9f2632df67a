use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::client::LlmError;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "CALIB_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// First backoff; doubles per attempt and is jittered by ±50%.
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_base_ms: 1000,
        }
    }
}

impl RetryPolicy {
    /// Nominal delay before retry number `retry` (1-based), before jitter.
    pub fn delay(&self, retry: u32) -> Duration {
        Duration::from_millis(
            self.backoff_base_ms
                .saturating_mul(1 << (retry - 1).min(16)),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Read from the environment, never from the config file.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_in_flight: usize,
    /// Alternatives requested per token for the P(True) probes.
    pub top_logprobs: u32,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key: None,
            temperature: 1.0,
            max_in_flight: 4,
            top_logprobs: 5,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::Config(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        if self.max_in_flight == 0 {
            return Err(LlmError::Config("max_in_flight must be at least 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(LlmError::Config(
                "retry.max_attempts must be at least 1".into(),
            ));
        }
        if self.base_url.is_empty() || self.model.is_empty() {
            return Err(LlmError::Config("base_url and model are required".into()));
        }
        Ok(())
    }

    /// Parses a TOML key-value file and picks up the API key from the
    /// environment.
    pub fn from_toml(text: &str) -> Result<Self, LlmError> {
        let mut cfg: EndpointConfig =
            toml::from_str(text).map_err(|e| LlmError::Config(e.to_string()))?;
        cfg.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn chat_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_validates() {
        let cfg = EndpointConfig::from_toml(
            "base_url = \"http://h/v1/\"\nmodel = \"m\"\ntemperature = 0.7\n[retry]\nmax_attempts = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.chat_url(), "http://h/v1/chat/completions");
        assert_eq!(cfg.retry.max_attempts, 5);
        assert_eq!(cfg.retry.backoff_base_ms, 1000);
        assert!(EndpointConfig::from_toml("temperature = -1.0").is_err());
        assert!(EndpointConfig::from_toml("max_in_flight = 0").is_err());
        assert!(EndpointConfig::from_toml("api_key = \"x\"").is_err());
    }

    #[test]
    fn backoff_doubles() {
        let r = RetryPolicy::default();
        assert_eq!(r.delay(1), Duration::from_secs(1));
        assert_eq!(r.delay(3), Duration::from_secs(4));
    }
}
