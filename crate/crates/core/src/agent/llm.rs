//! Optional chat-completions backend.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::AgentError;

pub const TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// full URL of the chat-completions route
    pub url: String,
    pub model: String,
    /// environment variable holding the bearer key, if any
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "EndpointConfig::default_timeout")]
    pub timeout_s: f64,
}

impl EndpointConfig {
    fn default_timeout() -> f64 {
        10.0
    }
}

pub fn request_body(prompt: &str, model: &str) -> Value {
    json!({
        "model": model,
        "temperature": TEMPERATURE,
        "messages": [
            { "role": "system", "content": "You are a home-care assistant. Answer with JSON only." },
            { "role": "user", "content": prompt },
        ],
    })
}

/// POST the prompt; returns the assistant message text.
pub fn decide_llm(prompt: &str, cfg: &EndpointConfig) -> Result<String, AgentError> {
    let unavailable = |e: String| AgentError::BackendUnavailable(e);
    let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs_f64(cfg.timeout_s)).build();
    let mut req = agent.post(&cfg.url).set("Content-Type", "application/json");
    if let Some(var) = &cfg.api_key_env {
        let key = std::env::var(var).map_err(|_| unavailable(format!("{var} is not set")))?;
        req = req.set("Authorization", &format!("Bearer {key}"));
    }
    let resp: Value = req
        .send_json(request_body(prompt, &cfg.model))
        .map_err(|e| unavailable(e.to_string()))?
        .into_json()
        .map_err(|e| unavailable(e.to_string()))?;
    resp.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| unavailable("response has no choices[0].message.content".into()))
}
