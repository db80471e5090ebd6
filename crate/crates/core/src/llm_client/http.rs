use std::fmt;
use std::time::Duration;

use serde_json::Value;

use super::{ChatProvider, ChatRequest, LlmError, ProviderConfig, ProviderReply, TransportError, Usage};

/// Chat-completions endpoint spoken over HTTP(S) with a bearer credential.
pub struct HttpProvider {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpProvider")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpProvider {
    /// Resolves the credential from the environment variable named in the
    /// config. A named but unset variable is a configuration error.
    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, LlmError> {
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| LlmError::Config(format!("credential variable {var} is not set")))?,
            ),
            None => None,
        };
        Ok(Self { endpoint: cfg.endpoint.clone(), api_key, agent: ureq::AgentBuilder::new().build() })
    }
}

fn is_context_overflow(body: &str) -> bool {
    let b = body.to_ascii_lowercase();
    b.contains("context_length_exceeded") || b.contains("maximum context length") || b.contains("context window")
}

fn classify_status(status: u16, body: String) -> TransportError {
    match status {
        400 | 413 if is_context_overflow(&body) => TransportError::ContextOverflow(body),
        408 | 409 | 429 | 500..=599 => TransportError::Transient { status: Some(status), message: body },
        _ => TransportError::Fatal { status: Some(status), message: body },
    }
}

pub(super) fn parse_reply(body: &Value) -> Result<ProviderReply, TransportError> {
    let content = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::Fatal { status: None, message: format!("no message content in reply: {body}") })?;
    let usage = body.get("usage").map(|u| Usage {
        prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
    });
    Ok(ProviderReply { content: content.to_string(), usage })
}

impl ChatProvider for HttpProvider {
    fn send(&self, request: &ChatRequest, timeout: Duration) -> Result<ProviderReply, TransportError> {
        let mut call = self.agent.post(&self.endpoint).timeout(timeout).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::to_value(request).expect("request serializes");
        match call.send_json(body) {
            Ok(resp) => {
                let json: Value = resp
                    .into_json()
                    .map_err(|e| TransportError::Transient { status: None, message: format!("unreadable reply: {e}") })?;
                parse_reply(&json)
            }
            Err(ureq::Error::Status(code, resp)) => Err(classify_status(code, resp.into_string().unwrap_or_default())),
            Err(ureq::Error::Transport(t)) => Err(TransportError::Transient { status: None, message: t.to_string() }),
        }
    }
}
