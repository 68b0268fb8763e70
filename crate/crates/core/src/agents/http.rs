//! Chat-completion HTTP client with per-provider request adapters.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tracing::warn;

use super::prompt::SYSTEM_PROMPT;
use super::{AgentBackend, AnswerRequest, BackendError, GenerationRequest};
use crate::model::ModelId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// OpenAI-style `/chat/completions`; also used by most hosted open-weight models.
    OpenAi,
    Anthropic,
    Gemini,
}

fn default_timeout_secs() -> u64 {
    120
}
fn default_max_retries() -> u32 {
    4
}
fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider: ProviderKind,
    /// Vendor model name sent in the request, e.g. `gpt-4`.
    pub model: String,
    pub endpoint: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    /// Decoding parameters passed through verbatim (temperature, top_p, ...).
    /// Empty means provider defaults.
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub max_concurrency: Option<usize>,
}

impl ProviderConfig {
    pub fn check(&self) -> Result<(), String> {
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://"))
            || self.endpoint.len() <= "https://".len()
        {
            return Err(format!("endpoint {:?} is not an http(s) URL", self.endpoint));
        }
        if self.timeout_secs == 0 {
            return Err("timeout_secs must be positive".into());
        }
        if self.api_key_env.trim().is_empty() {
            return Err("api_key_env must name an environment variable".into());
        }
        if self.max_concurrency == Some(0) {
            return Err("max_concurrency must be at least 1".into());
        }
        Ok(())
    }
}

/// Builds the provider-specific JSON body for a system + user exchange.
pub fn request_body(config: &ProviderConfig, system: &str, user: &str) -> Value {
    let mut body = match config.provider {
        ProviderKind::OpenAi => json!({
            "model": config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }),
        ProviderKind::Anthropic => json!({
            "model": config.model,
            "max_tokens": 2048,
            "system": system,
            "messages": [{"role": "user", "content": user}],
        }),
        ProviderKind::Gemini => json!({
            "systemInstruction": {"parts": [{"text": system}]},
            "contents": [{"role": "user", "parts": [{"text": user}]}],
        }),
    };
    let obj = body.as_object_mut().expect("object literal");
    match config.provider {
        ProviderKind::Gemini if !config.params.is_empty() => {
            obj.insert("generationConfig".into(), Value::Object(config.params.clone()));
        }
        ProviderKind::Gemini => {}
        _ => {
            for (k, v) in &config.params {
                obj.insert(k.clone(), v.clone());
            }
        }
    }
    body
}

/// Pulls the completion text out of a provider response.
pub fn extract_text(provider: ProviderKind, response: &Value) -> Option<String> {
    let text = match provider {
        ProviderKind::OpenAi => response.pointer("/choices/0/message/content")?.as_str()?.to_string(),
        ProviderKind::Anthropic => response
            .get("content")?
            .as_array()?
            .iter()
            .filter_map(|block| block.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
        ProviderKind::Gemini => response
            .pointer("/candidates/0/content/parts")?
            .as_array()?
            .iter()
            .filter_map(|part| part.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
    };
    Some(text)
}

pub struct HttpAgent {
    id: ModelId,
    config: ProviderConfig,
    agent: ureq::Agent,
}

impl HttpAgent {
    pub fn new(id: ModelId, config: ProviderConfig) -> Result<Self, BackendError> {
        config.check().map_err(BackendError::Config)?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        Ok(Self { id, config, agent })
    }

    fn api_key(&self) -> Result<String, BackendError> {
        std::env::var(&self.config.api_key_env)
            .map_err(|_| BackendError::Credentials(self.config.api_key_env.clone()))
    }

    fn send_once(&self, key: &str, body: &Value) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.config.endpoint).set("content-type", "application/json");
        req = match self.config.provider {
            ProviderKind::OpenAi => req.set("authorization", &format!("Bearer {key}")),
            ProviderKind::Anthropic => req.set("x-api-key", key).set("anthropic-version", "2023-06-01"),
            ProviderKind::Gemini => req.set("x-goog-api-key", key),
        };
        let response = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err(BackendError::Status { code, body });
            }
            Err(e) => return Err(BackendError::Transport(e.to_string())),
        };
        let value: Value = response
            .into_json()
            .map_err(|e| BackendError::Response(format!("invalid JSON: {e}")))?;
        extract_text(self.config.provider, &value)
            .ok_or_else(|| BackendError::Response(format!("no completion text in {value}")))
    }

    /// Sends one exchange, retrying transient failures with jittered exponential backoff.
    pub fn complete(&self, user: &str) -> Result<String, BackendError> {
        let key = self.api_key()?;
        let body = request_body(&self.config, SYSTEM_PROMPT, user);
        let mut attempt = 0;
        loop {
            match self.send_once(&key, &body) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    let delay = backoff_delay(self.config.backoff_base_ms, attempt);
                    warn!(model = %self.id, attempt = attempt + 1, error = %e, ?delay, "retrying request");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// `base * 2^attempt`, capped at 60 s, scaled by a random factor in [0.75, 1.25).
pub fn backoff_delay(base_ms: u64, attempt: u32) -> Duration {
    let raw = base_ms.saturating_mul(1u64 << attempt.min(20)).min(60_000);
    let jitter = rand::thread_rng().gen_range(0.75..1.25);
    Duration::from_millis((raw as f64 * jitter) as u64)
}

impl AgentBackend for HttpAgent {
    fn id(&self) -> &ModelId {
        &self.id
    }

    fn max_concurrency(&self) -> Option<usize> {
        self.config.max_concurrency
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        self.complete(&request.prompt)
    }

    fn answer(&self, request: &AnswerRequest) -> Result<String, BackendError> {
        self.complete(&request.prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(provider: ProviderKind) -> ProviderConfig {
        ProviderConfig {
            provider,
            model: "m".into(),
            endpoint: "https://example.invalid/v1".into(),
            api_key_env: "KEY".into(),
            params: Map::from_iter([("temperature".to_string(), json!(0.2))]),
            timeout_secs: 5,
            max_retries: 1,
            backoff_base_ms: 1,
            max_concurrency: None,
        }
    }

    #[test]
    fn bodies_follow_vendor_schemas() {
        let b = request_body(&config(ProviderKind::OpenAi), "sys", "hi");
        assert_eq!(b["messages"][1]["content"], "hi");
        assert_eq!(b["temperature"], 0.2);
        let b = request_body(&config(ProviderKind::Anthropic), "sys", "hi");
        assert_eq!(b["system"], "sys");
        assert_eq!(b["messages"][0]["role"], "user");
        let b = request_body(&config(ProviderKind::Gemini), "sys", "hi");
        assert_eq!(b["contents"][0]["parts"][0]["text"], "hi");
        assert_eq!(b["generationConfig"]["temperature"], 0.2);
    }

    #[test]
    fn text_extraction() {
        let openai = json!({"choices": [{"message": {"content": "x"}}]});
        assert_eq!(extract_text(ProviderKind::OpenAi, &openai).as_deref(), Some("x"));
        let anthropic = json!({"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]});
        assert_eq!(extract_text(ProviderKind::Anthropic, &anthropic).as_deref(), Some("ab"));
        let gemini = json!({"candidates": [{"content": {"parts": [{"text": "g"}]}}]});
        assert_eq!(extract_text(ProviderKind::Gemini, &gemini).as_deref(), Some("g"));
        assert_eq!(extract_text(ProviderKind::OpenAi, &json!({})), None);
    }

    #[test]
    fn config_checks() {
        assert!(config(ProviderKind::OpenAi).check().is_ok());
        let mut c = config(ProviderKind::OpenAi);
        c.endpoint = "ftp://x".into();
        assert!(c.check().is_err());
        let mut c = config(ProviderKind::OpenAi);
        c.timeout_secs = 0;
        assert!(c.check().is_err());
        let mut c = config(ProviderKind::OpenAi);
        c.api_key_env = "".into();
        assert!(c.check().is_err());
    }

    #[test]
    fn backoff_grows_and_caps() {
        for attempt in 0..5 {
            let d = backoff_delay(100, attempt).as_millis() as f64;
            let nominal = 100.0 * 2f64.powi(attempt as i32);
            assert!(d >= nominal * 0.75 - 1.0 && d <= nominal * 1.25);
        }
        assert!(backoff_delay(1000, 30) <= Duration::from_millis(75_000));
    }
}
