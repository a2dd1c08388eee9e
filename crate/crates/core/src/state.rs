//! Routing state machine for a single question.
//!
//! The pipeline drives every question through the same closed set of states:
//!
//! ```text
//! start --DraftReady--> drafted --VerdictReady--> judged
//!   judged{accept} --Adopt-->    accepted --Adopt--> final
//!   judged{reject} --Escalate--> escalated --LargeAnswerReady--> final
//! ```
//!
//! [`advance`] is a pure transition function: no I/O, no clock, no
//! randomness. Anything outside the table above is an
//! [`IllegalTransition`], which keeps impossible routings (re-judging an
//! accepted draft, escalating twice) unrepresentable at runtime.

use serde::{Deserialize, Serialize};

use crate::types::Decision;

/// Where a question currently stands in the cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PipelineState {
    /// Nothing has happened yet.
    Start,
    /// The small model has produced a draft.
    Drafted,
    /// The verifier has judged the draft; carries the resolved decision.
    Judged { decision: Decision },
    /// The draft was accepted and will become the final answer.
    Accepted,
    /// The draft was rejected; the large model is answering from scratch.
    Escalated,
    /// A final answer exists; no further transitions are legal.
    Final,
}

impl PipelineState {
    /// Stable lowercase name used in trace state histories.
    pub fn name(&self) -> &'static str {
        match self {
            PipelineState::Start => "start",
            PipelineState::Drafted => "drafted",
            PipelineState::Judged { .. } => "judged",
            PipelineState::Accepted => "accepted",
            PipelineState::Escalated => "escalated",
            PipelineState::Final => "final",
        }
    }
}

/// Events that can move a question between states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PipelineEvent {
    /// The small model returned a draft.
    DraftReady,
    /// The verifier returned, resolving to the carried decision.
    VerdictReady { decision: Decision },
    /// Adopt the accepted draft (judged -> accepted -> final).
    Adopt,
    /// Hand the question to the large model.
    Escalate,
    /// The large model returned its answer.
    LargeAnswerReady,
}

/// A state/event pair outside the transition table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("illegal transition: {event:?} in state {state:?}")]
pub struct IllegalTransition {
    pub state: PipelineState,
    pub event: PipelineEvent,
}

/// Applies one event to a state, returning the successor state.
///
/// Deterministic and total over the legal table; every other pair is an
/// [`IllegalTransition`].
///
/// # Errors
///
/// Returns [`IllegalTransition`] when `event` is not legal in `state` —
/// including `Adopt` on a rejection, `Escalate` on an acceptance, and any
/// event in `Final`.
pub fn advance(
    state: PipelineState,
    event: PipelineEvent,
) -> Result<PipelineState, IllegalTransition> {
    use PipelineEvent as E;
    use PipelineState as S;
    match (state, event) {
        (S::Start, E::DraftReady) => Ok(S::Drafted),
        (S::Drafted, E::VerdictReady { decision }) => Ok(S::Judged { decision }),
        (S::Judged { decision: Decision::Accept }, E::Adopt) => Ok(S::Accepted),
        (S::Judged { decision: Decision::Reject }, E::Escalate) => Ok(S::Escalated),
        (S::Accepted, E::Adopt) => Ok(S::Final),
        (S::Escalated, E::LargeAnswerReady) => Ok(S::Final),
        (state, event) => Err(IllegalTransition { state, event }),
    }
}

/// Tracks a state as events are applied, recording every state visited.
///
/// This is what the pipeline embeds in a [`crate::types::RoutingTrace`]:
/// the history starts at `start` and each successful [`Walk::apply`]
/// appends the successor's name.
#[derive(Debug, Clone)]
pub struct Walk {
    state: PipelineState,
    history: Vec<String>,
}

impl Walk {
    pub fn new() -> Self {
        let state = PipelineState::Start;
        Walk { state, history: vec![state.name().to_string()] }
    }

    pub fn state(&self) -> PipelineState {
        self.state
    }

    pub fn history(&self) -> &[String] {
        &self.history
    }

    pub fn into_history(self) -> Vec<String> {
        self.history
    }

    /// Advances the tracked state.
    ///
    /// # Errors
    ///
    /// Propagates [`IllegalTransition`] without changing the tracked state.
    pub fn apply(&mut self, event: PipelineEvent) -> Result<PipelineState, IllegalTransition> {
        let next = advance(self.state, event)?;
        self.state = next;
        self.history.push(next.name().to_string());
        Ok(next)
    }
}

impl Default for Walk {
    fn default() -> Self {
        Self::new()
    }
}
