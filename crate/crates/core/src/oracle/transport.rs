//! Chat-completion transport, rate limiting and retries.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

/// One chat-completion call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Connection failures, timeouts, throttling without a usable body.
    Retryable(String),
    /// The server answered with an error it explained; retrying will not help.
    Rejected { status: u16, body: String },
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Retryable(m) => write!(f, "{m}"),
            TransportError::Rejected { status, body } => write!(f, "status {status}: {body}"),
        }
    }
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// OpenAI-style `POST /chat/completions` over HTTP.
pub struct HttpTransport {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpTransport {
            endpoint: endpoint.into(),
            api_key,
            agent,
        }
    }

    /// Reads the key from the environment variable `key_var`.
    pub fn from_env(endpoint: impl Into<String>, key_var: &str) -> Self {
        Self::new(endpoint, std::env::var(key_var).ok(), Duration::from_secs(60))
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    content: String,
}

pub fn request_body(request: &ChatRequest) -> serde_json::Value {
    json!({
        "model": request.model,
        "messages": [{"role": "user", "content": request.prompt}],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    })
}

/// Extracts the first choice's message content from a response body.
pub fn parse_completion(body: &str) -> Option<String> {
    let parsed: CompletionResponse = serde_json::from_str(body).ok()?;
    parsed.choices.into_iter().next().map(|c| c.message.content)
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(request_body(request))
            .map_err(|e| TransportError::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Retryable(e.to_string()))?;
        if (200..300).contains(&status) {
            return parse_completion(&body)
                .ok_or_else(|| TransportError::Rejected { status, body: format!("unexpected body: {body}") });
        }
        let explained = serde_json::from_str::<serde_json::Value>(&body).is_ok();
        if explained {
            Err(TransportError::Rejected { status, body })
        } else {
            Err(TransportError::Retryable(format!("status {status}")))
        }
    }
}

/// Enforces a minimum spacing between request starts across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(interval: Duration) -> Self {
        RateLimiter {
            interval,
            last: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let mut last = self.last.lock().unwrap();
        if let Some(prev) = *last {
            let ready = prev + self.interval;
            let now = Instant::now();
            if ready > now {
                thread::sleep(ready - now);
            }
        }
        *last = Some(Instant::now());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

/// Calls the transport, retrying retryable failures with exponential backoff.
pub fn call_with_retry(
    transport: &dyn ChatTransport,
    limiter: &RateLimiter,
    policy: RetryPolicy,
    request: &ChatRequest,
) -> Result<String, TransportError> {
    let mut attempt = 0;
    loop {
        limiter.acquire();
        match transport.complete(request) {
            Ok(text) => return Ok(text),
            Err(TransportError::Retryable(msg)) if attempt < policy.max_retries => {
                log::debug!("retrying after transport error: {msg}");
                thread::sleep(policy.base_delay * 2u32.pow(attempt));
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}
