//! Two-tier model cascade with verified escalation.
//!
//! A small model drafts an answer to every question; a large model judges
//! the draft (a single pass/fail call, or a step-by-step check that stops
//! at the first wrong step); accepted drafts are adopted as-is, rejected
//! ones escalate once to the large model, optionally carrying the
//! verified steps forward. Every model call is metered and priced, so a
//! run reports accuracy next to token spend and dollar cost.
//!
//! Module map:
//!
//! * [`types`] — questions, drafts, verdicts, traces: the shared vocabulary.
//! * [`state`] — the per-question state machine (`start` → … → `final`).
//! * [`judge`] — judgment prompts and verdict parsing.
//! * [`provider`] — the model-backend trait plus scripted, cached, and
//!   HTTP implementations.
//! * [`pipeline`] — the cascade orchestrator and benchmark runner.
//! * [`bench`] — dataset loading, answer extraction, grading.
//! * [`ledger`] — token/cost accounting and report aggregation.
//! * [`sim`] — closed-form and Monte-Carlo policy prediction, no models
//!   required.

pub mod bench;
pub mod judge;
pub mod ledger;
pub mod pipeline;
pub mod provider;
pub mod sim;
pub mod state;
pub mod types;

pub use judge::JudgeConfig;
pub use ledger::{CallRole, CostLedger, LedgerEntry, ModelPrice, PriceTable};
pub use pipeline::{
    BenchmarkOutput, BenchmarkReport, PipelineConfig, QuestionOutcome, RoleBinding,
    run_benchmark, run_question,
};
pub use provider::{
    CacheMode, CachedProvider, Completion, CompletionRequest, HttpProvider, Message, Provider,
    ProviderError, ResponseCache, ScriptedProvider,
};
pub use types::{
    AnswerKind, AnswerValue, AnsweredBy, Decision, Draft, JudgeStrategy, Question, RoutingTrace,
    Usage, Verdict, VerdictBasis,
};
