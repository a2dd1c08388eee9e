//! Live HTTP provider speaking the OpenAI-style chat-completions wire
//! format.
//!
//! One POST to `{base_url}/chat/completions` per attempt. Transient
//! failures — 429, any 5xx, network errors, timeouts, and unparseable
//! success bodies — are retried with full-jitter exponential backoff;
//! other 4xx responses fail immediately. A response that parses but
//! carries no token usage is a hard [`ProviderError::MissingUsage`]:
//! usage is never estimated, because downstream accounting treats token
//! counts as ground truth.
//!
//! A semaphore caps in-flight requests per provider; the permit is held
//! across retries so the cap bounds total pressure on the backend.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use super::{Completion, CompletionRequest, FinishReason, Message, Provider, ProviderError};
use crate::types::Usage;

/// Default cap on concurrent requests per provider.
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

/// Retry schedule: `max_attempts` total tries, sleeping a uniformly random
/// duration in `[0, initial_backoff * backoff_factor^(attempt-1))` between
/// them (full jitter).
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub backoff_factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            initial_backoff: Duration::from_millis(500),
            backoff_factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Backoff cap before the attempt numbered `attempt` (1-based; the
    /// sleep happens after that attempt fails).
    fn backoff_cap(&self, attempt: u32) -> Duration {
        let factor = self.backoff_factor.powi(attempt.saturating_sub(1) as i32);
        self.initial_backoff.mul_f64(factor)
    }

    fn jittered(&self, attempt: u32) -> Duration {
        let cap = self.backoff_cap(attempt);
        cap.mul_f64(rand::rng().random_range(0.0..1.0))
    }
}

/// Chat-completions client for one backend endpoint.
pub struct HttpProvider {
    id: String,
    base_url: String,
    api_key: Option<String>,
    client: reqwest::Client,
    limiter: Arc<Semaphore>,
    retry: RetryPolicy,
}

impl HttpProvider {
    /// Creates a provider for `base_url` (e.g. `https://host/v1`); the
    /// `/chat/completions` suffix is appended per request.
    pub fn new(id: impl Into<String>, base_url: impl Into<String>) -> Self {
        HttpProvider {
            id: id.into(),
            base_url: base_url.into(),
            api_key: None,
            client: reqwest::Client::new(),
            limiter: Arc::new(Semaphore::new(DEFAULT_MAX_IN_FLIGHT)),
            retry: RetryPolicy::default(),
        }
    }

    /// Sends `Authorization: Bearer <key>` when set.
    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Caps concurrent in-flight requests (default
    /// [`DEFAULT_MAX_IN_FLIGHT`]). The cap covers retries too.
    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.limiter = Arc::new(Semaphore::new(limit.max(1)));
        self
    }

    /// Per-request timeout; a timed-out attempt counts as transient and is
    /// retried.
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("client with timeout builds");
        self
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    async fn attempt(&self, request: &CompletionRequest) -> Result<Completion, AttemptError> {
        let mut call = self.client.post(self.endpoint()).json(&WireRequest::from(request));
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = call
            .send()
            .await
            .map_err(|e| AttemptError::Transient(format!("request failed: {e}")))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(AttemptError::Transient(format!("status {status}")));
        }
        if status.is_client_error() {
            let detail = response.text().await.unwrap_or_default();
            return Err(AttemptError::Fatal(ProviderError::BadRequest {
                status: status.as_u16(),
                detail: snippet(&detail),
            }));
        }
        let body = response
            .text()
            .await
            .map_err(|e| AttemptError::Transient(format!("body read failed: {e}")))?;
        let wire: WireResponse = serde_json::from_str(&body)
            .map_err(|e| AttemptError::Transient(format!("unparseable response: {e}")))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| AttemptError::Transient("response has no choices".to_string()))?;
        let usage = wire.usage.ok_or_else(|| {
            AttemptError::Fatal(ProviderError::MissingUsage { model_id: request.model_id.clone() })
        })?;
        Ok(Completion {
            text: choice.message.content.unwrap_or_default(),
            usage: Usage::new(usage.prompt_tokens, usage.completion_tokens),
            finish_reason: match choice.finish_reason.as_deref() {
                Some("stop") | None => FinishReason::Stop,
                Some("length") => FinishReason::Length,
                Some(other) => FinishReason::Other(other.to_string()),
            },
        })
    }
}

#[async_trait]
impl Provider for HttpProvider {
    fn id(&self) -> &str {
        &self.id
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        let _permit = self.limiter.acquire().await.expect("limiter never closed");
        let attempts = self.retry.max_attempts.max(1);
        let mut last_detail = String::new();
        for attempt in 1..=attempts {
            match self.attempt(request).await {
                Ok(completion) => return Ok(completion),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Transient(detail)) => {
                    last_detail = detail;
                    if attempt < attempts {
                        tokio::time::sleep(self.retry.jittered(attempt)).await;
                    }
                }
            }
        }
        Err(ProviderError::Transport { attempts, detail: last_detail })
    }
}

enum AttemptError {
    /// Worth retrying: rate limit, server error, network trouble,
    /// unparseable body.
    Transient(String),
    /// Retrying cannot help; surface immediately.
    Fatal(ProviderError),
}

fn snippet(text: &str) -> String {
    const LIMIT: usize = 200;
    if text.len() <= LIMIT {
        return text.to_string();
    }
    let mut end = LIMIT;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}…", &text[..end])
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
    /// Present (as `"high"`) only when the request asks for reasoning;
    /// omitted otherwise so non-reasoning backends see a plain request.
    #[serde(skip_serializing_if = "Option::is_none")]
    reasoning_effort: Option<&'static str>,
}

impl<'a> From<&'a CompletionRequest> for WireRequest<'a> {
    fn from(request: &'a CompletionRequest) -> Self {
        WireRequest {
            model: &request.model_id,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_output_tokens,
            reasoning_effort: request.reasoning_enabled.then_some("high"),
        }
    }
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(default)]
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}
