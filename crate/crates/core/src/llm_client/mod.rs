//! Provider-agnostic chat-completion transport.
//!
//! [`LlmClient`] owns retry, backoff, timing and a global in-flight cap; the
//! wire format lives behind [`ChatProvider`]. Callers own the transcript and
//! append the returned assistant message themselves.

mod classify;
mod http;
mod mock;
mod parse;

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{classify_label, parse_labels, Rubric, DEFAULT_RUBRIC};
pub use http::HttpProvider;
pub use mock::{ScriptedProvider, SimulatedParticipant, QUIZ_MARKER};
pub use parse::{answer_span, parse_configuration, ParseError, ParseErrorKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// Checks that a transcript is ready to be sent: non-empty system and user
/// messages (a model may have replied with nothing), an optional leading
/// system block, then strictly alternating user/assistant turns
/// ending on a user turn.
pub fn validate_transcript(messages: &[ChatMessage]) -> Result<(), LlmError> {
    let bad = |m: String| Err(LlmError::Transcript(m));
    if let Some(i) = messages.iter().position(|m| m.role != Role::Assistant && m.content.trim().is_empty()) {
        return bad(format!("message {i} is empty"));
    }
    let body = messages.iter().skip_while(|m| m.role == Role::System);
    let mut expected = Role::User;
    let mut last = None;
    for (i, m) in body.enumerate() {
        if m.role != expected {
            return bad(format!("turn {i} has role {:?}, expected {expected:?}", m.role));
        }
        expected = if expected == Role::User { Role::Assistant } else { Role::User };
        last = Some(m.role);
    }
    if last != Some(Role::User) {
        return bad("transcript must end with a user turn".into());
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_backoff_ms: 500, max_backoff_ms: 30_000 }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, retry: u32) -> Duration {
        let ms = self.base_backoff_ms.saturating_mul(1u64 << retry.min(30));
        Duration::from_millis(ms.min(self.max_backoff_ms))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Chat-completions JSON over HTTPS.
    #[default]
    Openai,
    /// [`SimulatedParticipant`], seeded.
    Mock,
    /// [`ScriptedProvider`] fed from a file of canned replies.
    Script,
}

/// Per-model provider settings. The credential is referenced by the name of
/// an environment variable and never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default)]
    pub kind: ProviderKind,
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    /// `None` leaves the provider default in place.
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Instructions as a system message (true) or as the first user turn.
    #[serde(default = "default_true")]
    pub instructions_as_system: bool,
    /// Seed for the simulated participant.
    #[serde(default)]
    pub mock_seed: u64,
    /// Path of the reply file for scripted providers.
    #[serde(default)]
    pub script_path: Option<String>,
}

fn default_endpoint() -> String {
    "https://api.openai.com/v1/chat/completions".into()
}
fn default_timeout() -> u64 {
    120_000
}
fn default_true() -> bool {
    true
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::default(),
            endpoint: default_endpoint(),
            model: String::new(),
            temperature: None,
            max_tokens: None,
            retry: RetryPolicy::default(),
            timeout_ms: default_timeout(),
            api_key_env: None,
            instructions_as_system: true,
            mock_seed: 0,
            script_path: None,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if let Some(t) = self.temperature {
            if !(0.0..=2.0).contains(&t) {
                return Err(LlmError::Config(format!("temperature {t} outside [0, 2]")));
            }
        }
        if self.kind == ProviderKind::Openai && self.model.is_empty() {
            return Err(LlmError::Config("model identifier is required".into()));
        }
        if self.kind == ProviderKind::Script && self.script_path.is_none() {
            return Err(LlmError::Config("script provider needs script_path".into()));
        }
        Ok(())
    }
}

/// One request as handed to a provider.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProviderReply {
    pub content: String,
    pub usage: Option<Usage>,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum TransportError {
    #[error("transient failure (status {status:?}): {message}")]
    Transient { status: Option<u16>, message: String },
    #[error("fatal failure (status {status:?}): {message}")]
    Fatal { status: Option<u16>, message: String },
    #[error("context size exceeded: {0}")]
    ContextOverflow(String),
}

pub trait ChatProvider: Send + Sync {
    fn send(&self, request: &ChatRequest, timeout: Duration) -> Result<ProviderReply, TransportError>;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed transcript: {0}")]
    Transcript(String),
    #[error("provider error after {attempts} attempt(s), last status {status:?}: {message}")]
    Provider { attempts: u32, status: Option<u16>, message: String },
    #[error("context size exceeded: {0}")]
    ContextOverflow(String),
    #[error("classifier format error: {0}")]
    ClassifierFormat(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub message: ChatMessage,
    pub usage: Option<Usage>,
    pub retries: u32,
    pub elapsed_ms: u64,
}

/// Counting semaphore bounding in-flight requests across all runs.
#[derive(Debug)]
pub struct Limiter {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    pub fn new(cap: usize) -> Self {
        Self { permits: Mutex::new(cap.max(1)), freed: Condvar::new() }
    }

    pub fn acquire(&self) -> LimiterGuard<'_> {
        let mut p = self.permits.lock().expect("limiter poisoned");
        while *p == 0 {
            p = self.freed.wait(p).expect("limiter poisoned");
        }
        *p -= 1;
        LimiterGuard { limiter: self }
    }
}

pub struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.limiter.permits.lock().expect("limiter poisoned") += 1;
        self.limiter.freed.notify_one();
    }
}

#[derive(Clone)]
pub struct LlmClient {
    provider: Arc<dyn ChatProvider>,
    limiter: Arc<Limiter>,
}

impl LlmClient {
    pub fn new(provider: Arc<dyn ChatProvider>, limiter: Arc<Limiter>) -> Self {
        Self { provider, limiter }
    }

    pub fn with_provider(provider: impl ChatProvider + 'static) -> Self {
        Self::new(Arc::new(provider), Arc::new(Limiter::new(8)))
    }

    /// Sends the transcript and returns the assistant reply verbatim,
    /// retrying transient failures with exponential backoff.
    pub fn complete(&self, transcript: &[ChatMessage], cfg: &ProviderConfig) -> Result<Completion, LlmError> {
        cfg.validate()?;
        validate_transcript(transcript)?;
        let request = ChatRequest {
            model: cfg.model.clone(),
            messages: transcript.to_vec(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
        };
        let timeout = Duration::from_millis(cfg.timeout_ms);
        let started = Instant::now();
        let mut retries = 0;
        loop {
            let result = {
                let _permit = self.limiter.acquire();
                self.provider.send(&request, timeout)
            };
            match result {
                Ok(reply) => {
                    return Ok(Completion {
                        message: ChatMessage::assistant(reply.content),
                        usage: reply.usage,
                        retries,
                        elapsed_ms: started.elapsed().as_millis() as u64,
                    })
                }
                Err(TransportError::ContextOverflow(m)) => return Err(LlmError::ContextOverflow(m)),
                Err(TransportError::Fatal { status, message }) => {
                    return Err(LlmError::Provider { attempts: retries + 1, status, message })
                }
                Err(TransportError::Transient { status, message }) => {
                    if retries >= cfg.retry.max_retries {
                        return Err(LlmError::Provider { attempts: retries + 1, status, message });
                    }
                    std::thread::sleep(cfg.retry.backoff(retries));
                    retries += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast() -> ProviderConfig {
        ProviderConfig {
            kind: ProviderKind::Mock,
            retry: RetryPolicy { max_retries: 3, base_backoff_ms: 0, max_backoff_ms: 0 },
            ..Default::default()
        }
    }

    fn transient() -> TransportError {
        TransportError::Transient { status: Some(503), message: "busy".into() }
    }

    fn hello() -> Vec<ChatMessage> {
        vec![ChatMessage::system("rules"), ChatMessage::user("hi")]
    }

    #[test]
    fn scripted_replies_in_order() {
        let client = LlmClient::with_provider(ScriptedProvider::new(["one", "two"]));
        let mut t = hello();
        let a = client.complete(&t, &fast()).unwrap();
        assert_eq!(a.message.content, "one");
        t.push(a.message);
        t.push(ChatMessage::user("again"));
        assert_eq!(client.complete(&t, &fast()).unwrap().message.content, "two");
    }

    #[test]
    fn retries_transient_failures() {
        let provider = ScriptedProvider::from_results(vec![Err(transient()), Err(transient()), Ok("ok".into())]);
        let client = LlmClient::with_provider(provider);
        let c = client.complete(&hello(), &fast()).unwrap();
        assert_eq!(c.retries, 2);
        assert_eq!(c.message.content, "ok");
    }

    #[test]
    fn exhausted_retry_budget_is_a_provider_error() {
        let provider = ScriptedProvider::from_results(vec![Err(transient()), Err(transient()), Ok("late".into())]);
        let client = LlmClient::with_provider(provider);
        let mut cfg = fast();
        cfg.retry.max_retries = 1;
        match client.complete(&hello(), &cfg) {
            Err(LlmError::Provider { attempts, status, .. }) => {
                assert_eq!(attempts, 2);
                assert_eq!(status, Some(503));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn context_overflow_is_distinct() {
        let provider = ScriptedProvider::from_results(vec![Err(TransportError::ContextOverflow("too long".into()))]);
        let client = LlmClient::with_provider(provider);
        assert!(matches!(client.complete(&hello(), &fast()), Err(LlmError::ContextOverflow(_))));
    }

    #[test]
    fn transcript_shape_is_enforced() {
        assert!(validate_transcript(&hello()).is_ok());
        assert!(validate_transcript(&[ChatMessage::user("a"), ChatMessage::user("b")]).is_err());
        assert!(validate_transcript(&[ChatMessage::system("s")]).is_err());
        assert!(validate_transcript(&[ChatMessage::user("")]).is_err());
        assert!(validate_transcript(&[ChatMessage::user("a"), ChatMessage::assistant("b")]).is_err());
    }

    #[test]
    fn temperature_bounds() {
        let mut cfg = fast();
        cfg.temperature = Some(2.5);
        assert!(matches!(cfg.validate(), Err(LlmError::Config(_))));
        cfg.temperature = Some(2.0);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy { max_retries: 5, base_backoff_ms: 100, max_backoff_ms: 350 };
        assert_eq!(p.backoff(0), Duration::from_millis(100));
        assert_eq!(p.backoff(1), Duration::from_millis(200));
        assert_eq!(p.backoff(2), Duration::from_millis(350));
    }

    #[test]
    fn limiter_caps_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let limiter = Arc::new(Limiter::new(2));
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let (limiter, live, peak) = (limiter.clone(), live.clone(), peak.clone());
                s.spawn(move || {
                    let _g = limiter.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    live.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
