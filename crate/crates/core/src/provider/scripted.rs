//! Deterministic scripted provider for tests and offline runs.
//!
//! The world is closed: every answerable prompt is registered up front as a
//! (matcher, completion) pair, matched against the request's last user
//! message. Anything unmatched is a hard [`ProviderError::NoScript`] — a
//! scripted run can never silently invent a response, and it never touches
//! the network.

use std::sync::Mutex;

use async_trait::async_trait;

use super::{Completion, CompletionRequest, Provider, ProviderError};

/// How a scripted response is keyed to incoming prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptMatcher {
    /// The last user message equals this string exactly.
    Exact(String),
    /// The last user message contains this string.
    Substring(String),
}

impl PromptMatcher {
    pub fn matches(&self, last_user_message: &str) -> bool {
        match self {
            PromptMatcher::Exact(s) => last_user_message == s,
            PromptMatcher::Substring(s) => last_user_message.contains(s),
        }
    }
}

/// In-memory provider that replays registered completions.
///
/// Later registrations shadow earlier ones when several match the same
/// prompt. Every served request is recorded and can be inspected
/// afterwards, which is how tests assert on the exact prompts the
/// pipeline sent.
pub struct ScriptedProvider {
    id: String,
    scripts: Vec<(PromptMatcher, Completion)>,
    served: Mutex<Vec<CompletionRequest>>,
}

impl ScriptedProvider {
    pub fn new(id: impl Into<String>) -> Self {
        ScriptedProvider { id: id.into(), scripts: Vec::new(), served: Mutex::new(Vec::new()) }
    }

    /// Registers a response for prompts matching `matcher`.
    pub fn register(&mut self, matcher: PromptMatcher, completion: Completion) {
        self.scripts.push((matcher, completion));
    }

    /// Builder-style [`ScriptedProvider::register`].
    pub fn with_response(mut self, matcher: PromptMatcher, completion: Completion) -> Self {
        self.register(matcher, completion);
        self
    }

    pub fn script_len(&self) -> usize {
        self.scripts.len()
    }

    /// Requests served so far, in arrival order.
    pub fn served_requests(&self) -> Vec<CompletionRequest> {
        self.served.lock().expect("served lock").clone()
    }

    pub fn served_count(&self) -> usize {
        self.served.lock().expect("served lock").len()
    }
}

#[async_trait]
impl Provider for ScriptedProvider {
    fn id(&self) -> &str {
        &self.id
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        self.served.lock().expect("served lock").push(request.clone());
        let last_user = request.last_user_message().unwrap_or("");
        // Reverse scan: the most recent registration wins.
        for (matcher, completion) in self.scripts.iter().rev() {
            if matcher.matches(last_user) {
                return Ok(completion.clone());
            }
        }
        let preview: String = last_user.chars().take(120).collect();
        Err(ProviderError::NoScript { preview })
    }
}
