//! Model providers: the completion interface the pipeline calls, plus the
//! three implementations — a live OpenAI-compatible HTTP client, a
//! deterministic scripted provider for tests and offline runs, and a
//! caching wrapper that records and replays completions.
//!
//! Providers are shared services: `complete` takes `&self` and every
//! implementation is safe to call from many workers at once.

mod cache;
mod http;
mod scripted;

pub use cache::{CacheMode, CacheRecord, CachedProvider, ResponseCache, cache_key};
pub use http::{HttpProvider, RetryPolicy};
pub use scripted::{PromptMatcher, ScriptedProvider};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::types::Usage;

/// Chat message author.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

/// One chat message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: MessageRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: MessageRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: MessageRole::Assistant, content: content.into() }
    }
}

/// A single completion call: the full message list plus the sampling
/// parameters that affect the output. Everything here participates in the
/// response-cache key, so two requests differing in any field are distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Ask the model to think before answering (deep-reasoning mode).
    pub reasoning_enabled: bool,
}

impl CompletionRequest {
    /// Content of the last user message, the string scripted matchers and
    /// most debugging care about.
    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == MessageRole::User)
            .map(|m| m.content.as_str())
    }
}

/// Why the model stopped generating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    /// Natural stop; the text is complete.
    Stop,
    /// Output-token budget hit; the text is truncated and suspect.
    Length,
    /// Anything else the endpoint reported.
    Other(String),
}

/// A model's reply. `usage` is always the provider's own accounting —
/// live calls never estimate token counts, and scripted completions carry
/// exact synthetic counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
    pub finish_reason: FinishReason,
}

/// Provider failures. `Transport` is only surfaced after the retry policy
/// is exhausted; the rest are immediate.
#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("endpoint rejected request with status {status}: {detail}")]
    BadRequest { status: u16, detail: String },
    #[error("endpoint returned no token usage for model {model_id}")]
    MissingUsage { model_id: String },
    #[error("no scripted response matches last user message {preview:?}")]
    NoScript { preview: String },
    #[error("replay miss: cache has no entry for key {key}")]
    ReplayMiss { key: String },
    #[error("cache file {path} is corrupt at record {record}: {reason}")]
    CacheCorrupt { path: String, record: usize, reason: String },
    #[error("cache I/O on {path}: {detail}")]
    CacheIo { path: String, detail: String },
}

/// A completion backend. Implementations must be shareable across worker
/// tasks; the id is stable and feeds the response-cache key, so two
/// providers with the same id must be interchangeable.
#[async_trait]
pub trait Provider: Send + Sync {
    /// Stable identifier for cache keying and diagnostics.
    fn id(&self) -> &str;

    /// Executes one completion call.
    ///
    /// # Errors
    ///
    /// Returns a [`ProviderError`] as described on each variant.
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError>;
}
