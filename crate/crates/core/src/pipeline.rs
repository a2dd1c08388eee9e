//! The cascade itself: draft with the small model, judge with the large
//! model, adopt or escalate.
//!
//! Per question the flow is fixed:
//!
//! 1. **Draft** — the small model answers the bare question.
//! 2. **Judge** — the large model grades the draft (one call, either
//!    judgment strategy). An unreachable or unparseable verifier never
//!    adopts: it records a zero-usage verify entry and rejects.
//! 3. **Adopt or escalate** — an accepted draft is final; a rejected one
//!    sends the question (optionally augmented with verified steps) to
//!    the large model, whose answer is final and is *not* re-judged.
//!
//! Every model call lands in the question's cost ledger as it happens, so
//! a finished trace always shows exactly two entries for an adopted draft
//! (draft, verify) and exactly three for an escalation (draft, verify,
//! escalate). Draft or escalation transport failures abort the question;
//! it is reported as failed rather than traced.

use std::sync::Arc;

use futures::StreamExt;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench;
use crate::judge::{self, JudgeConfig};
use crate::ledger::{CallRole, CostLedger, Graded, PriceTable, summarize};
use crate::provider::{CompletionRequest, Message, Provider};
use crate::state::{PipelineEvent, Walk};
use crate::types::{
    AnsweredBy, Decision, Draft, JudgeStrategy, Question, RoutingTrace, Usage, Verdict,
    VerdictBasis,
};

/// Sampling temperature for draft and escalation calls.
pub const DRAFT_TEMPERATURE: f64 = 0.7;
/// Sampling temperature for judgment calls: graders are deterministic.
pub const JUDGE_TEMPERATURE: f64 = 0.0;
/// Output budget per call.
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 4096;
/// Questions processed concurrently by [`run_benchmark`].
pub const DEFAULT_PARALLELISM: usize = 8;

/// A provider plus the per-call parameters for one tier.
#[derive(Clone)]
pub struct RoleBinding {
    pub provider: Arc<dyn Provider>,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Ask the backend to spend reasoning effort on draft/escalation
    /// calls for this tier. Judgment calls never use it.
    pub reasoning_enabled: bool,
}

impl RoleBinding {
    /// Small-tier defaults: sampling on, reasoning off.
    pub fn small(provider: Arc<dyn Provider>, model_id: impl Into<String>) -> Self {
        RoleBinding {
            provider,
            model_id: model_id.into(),
            temperature: DRAFT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            reasoning_enabled: false,
        }
    }

    /// Large-tier defaults: sampling on, reasoning on (spent only when a
    /// question escalates).
    pub fn large(provider: Arc<dyn Provider>, model_id: impl Into<String>) -> Self {
        RoleBinding {
            provider,
            model_id: model_id.into(),
            temperature: DRAFT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            reasoning_enabled: true,
        }
    }

    fn request(&self, prompt: &str, temperature: f64, reasoning: bool) -> CompletionRequest {
        CompletionRequest {
            model_id: self.model_id.clone(),
            messages: vec![Message::user(prompt)],
            temperature,
            max_output_tokens: self.max_output_tokens,
            reasoning_enabled: reasoning,
        }
    }
}

/// Everything a run needs: the two tiers, the judge, and prices.
pub struct PipelineConfig {
    pub small: RoleBinding,
    pub large: RoleBinding,
    pub judge: JudgeConfig,
    /// Temperature for judgment calls (default [`JUDGE_TEMPERATURE`]).
    pub judge_temperature: f64,
    pub prices: PriceTable,
    pub parallelism: usize,
}

impl PipelineConfig {
    pub fn new(small: RoleBinding, large: RoleBinding) -> Self {
        PipelineConfig {
            small,
            large,
            judge: JudgeConfig::default(),
            judge_temperature: JUDGE_TEMPERATURE,
            prices: PriceTable::builtin_default(),
            parallelism: DEFAULT_PARALLELISM,
        }
    }
}

/// A question that never produced a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionFailure {
    pub question_id: String,
    /// Which call failed.
    pub stage: CallRole,
    pub error: String,
}

/// What happened to one question.
#[derive(Debug, Clone, PartialEq)]
pub enum QuestionOutcome {
    Completed(RoutingTrace),
    Failed(QuestionFailure),
}

/// Runs one question through draft → judge → adopt/escalate.
///
/// Infallible by construction: model-call failures become a
/// [`QuestionOutcome::Failed`] (draft/escalation) or a forced escalation
/// (judgment), never a panic or an early return.
pub async fn run_question(config: &PipelineConfig, question: &Question) -> QuestionOutcome {
    let mut walk = Walk::new();
    let mut ledger = CostLedger::new();
    let fail = |stage: CallRole, error: String| {
        QuestionOutcome::Failed(QuestionFailure {
            question_id: question.id.clone(),
            stage,
            error,
        })
    };

    // Draft: the small model sees the bare question.
    let draft_request = config.small.request(
        &question.text,
        config.small.temperature,
        config.small.reasoning_enabled,
    );
    let draft_completion = match config.small.provider.complete(&draft_request).await {
        Ok(completion) => completion,
        Err(e) => return fail(CallRole::Draft, e.to_string()),
    };
    ledger.record(
        CallRole::Draft,
        &config.small.model_id,
        draft_completion.usage,
        config.prices.price_call(&config.small.model_id, draft_completion.usage),
    );
    let draft = Draft {
        extracted: bench::extract_answer(question.kind, &draft_completion.text),
        answer_text: draft_completion.text,
        usage: draft_completion.usage,
    };
    walk.apply(PipelineEvent::DraftReady).expect("draft transition is legal");

    // Judge: one large-model call at judge temperature, no reasoning —
    // grading is meant to be cheap. A transport failure cannot adopt, so
    // it records a zero-usage verify entry and escalates as a parse
    // failure.
    let prompt = judge::build_judgment_prompt(&config.judge, question, &draft);
    let judge_request = config.large.request(&prompt.text, config.judge_temperature, false);
    let verdict: Verdict = match config.large.provider.complete(&judge_request).await {
        Ok(completion) => {
            ledger.record(
                CallRole::Verify,
                &config.large.model_id,
                completion.usage,
                config.prices.price_call(&config.large.model_id, completion.usage),
            );
            judge::parse_verdict(&config.judge, &completion.text)
        }
        Err(_) => {
            ledger.record(CallRole::Verify, &config.large.model_id, Usage::default(), Decimal::ZERO);
            Verdict::from_basis(VerdictBasis::ParseFailure, None)
        }
    };
    walk.apply(PipelineEvent::VerdictReady { decision: verdict.decision })
        .expect("judged transition is legal");

    match verdict.decision {
        Decision::Accept => {
            walk.apply(PipelineEvent::Adopt).expect("accept transition is legal");
            walk.apply(PipelineEvent::Adopt).expect("final transition is legal");
            QuestionOutcome::Completed(RoutingTrace {
                question_id: question.id.clone(),
                state_history: walk.into_history(),
                verdict,
                answered_by: AnsweredBy::SmallModel,
                final_answer: draft.answer_text,
                augmented: false,
                ledger,
            })
        }
        Decision::Reject => {
            walk.apply(PipelineEvent::Escalate).expect("escalate transition is legal");
            let verified = if config.judge.augment_escalation {
                verdict.steps.as_ref()
            } else {
                None
            };
            let augmented =
                verified.is_some_and(|seq| !seq.correct_step_texts().is_empty());
            let escalation_prompt =
                judge::build_escalation_prompt(&config.judge, question, verified);
            let escalate_request = config.large.request(
                &escalation_prompt,
                config.large.temperature,
                config.large.reasoning_enabled,
            );
            let completion = match config.large.provider.complete(&escalate_request).await {
                Ok(completion) => completion,
                Err(e) => return fail(CallRole::Escalate, e.to_string()),
            };
            ledger.record(
                CallRole::Escalate,
                &config.large.model_id,
                completion.usage,
                config.prices.price_call(&config.large.model_id, completion.usage),
            );
            walk.apply(PipelineEvent::LargeAnswerReady).expect("final transition is legal");
            QuestionOutcome::Completed(RoutingTrace {
                question_id: question.id.clone(),
                state_history: walk.into_history(),
                verdict,
                answered_by: AnsweredBy::LargeModel,
                final_answer: completion.text,
                augmented,
                ledger,
            })
        }
    }
}

/// The two model ids of a run, as they appear in `report.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelIds {
    pub small: String,
    pub large: String,
}

/// Aggregate results of a benchmark run. Field order here is the byte
/// order of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    /// Percentage, 4 significant figures.
    pub accuracy: f64,
    /// Mean output tokens per question across all calls, rounded.
    pub mean_output_tokens: u64,
    pub mean_input_tokens: u64,
    pub escalation_rate: f64,
    /// USD per 100 questions, 3 decimal places.
    pub cost_per_100: Decimal,
    pub n: usize,
    pub n_failed: usize,
    pub strategy: JudgeStrategy,
    pub model_ids: ModelIds,
}

/// Everything a benchmark run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub report: BenchmarkReport,
    /// One trace per completed question, in dataset order.
    pub traces: Vec<RoutingTrace>,
    pub failures: Vec<QuestionFailure>,
}

/// Why a run produced no report.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no questions completed ({n_failed} failed)")]
    NoCompletedQuestions { n_failed: usize },
}

/// Runs every question concurrently (up to `parallelism` in flight) and
/// aggregates. Traces come back in dataset order regardless of completion
/// order, so output files are deterministic for deterministic providers.
///
/// # Errors
///
/// [`PipelineError::EmptyDataset`] for an empty slice,
/// [`PipelineError::NoCompletedQuestions`] when every question failed.
pub async fn run_benchmark(
    config: &PipelineConfig,
    questions: &[Question],
) -> Result<BenchmarkOutput, PipelineError> {
    if questions.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let mut indexed: Vec<(usize, QuestionOutcome)> = futures::stream::iter(
        questions
            .iter()
            .enumerate()
            .map(|(i, question)| async move { (i, run_question(config, question).await) }),
    )
    .buffer_unordered(config.parallelism.max(1))
    .collect()
    .await;
    indexed.sort_by_key(|(i, _)| *i);

    let mut traces = Vec::new();
    let mut correctness = Vec::new();
    let mut failures = Vec::new();
    for (i, outcome) in indexed {
        match outcome {
            QuestionOutcome::Completed(trace) => {
                correctness.push(bench::grade_response(&questions[i], &trace.final_answer));
                traces.push(trace);
            }
            QuestionOutcome::Failed(failure) => failures.push(failure),
        }
    }
    if traces.is_empty() {
        return Err(PipelineError::NoCompletedQuestions { n_failed: failures.len() });
    }
    let graded: Vec<Graded<'_>> = traces
        .iter()
        .zip(&correctness)
        .map(|(trace, &correct)| Graded { trace, correct })
        .collect();
    let row = summarize("run", &graded, failures.len())
        .expect("summarize succeeds on a non-empty trace set");
    let report = BenchmarkReport {
        accuracy: row.accuracy,
        mean_output_tokens: row.mean_output_tokens,
        mean_input_tokens: row.mean_input_tokens,
        escalation_rate: row.escalation_rate,
        cost_per_100: row.cost_per_100,
        n: row.n,
        n_failed: row.n_failed,
        strategy: config.judge.strategy,
        model_ids: ModelIds {
            small: config.small.model_id.clone(),
            large: config.large.model_id.clone(),
        },
    };
    Ok(BenchmarkOutput { report, traces, failures })
}

/// One JSON object per line, dataset order, trailing newline.
pub fn render_traces_jsonl(traces: &[RoutingTrace]) -> String {
    let mut out = String::new();
    for trace in traces {
        out.push_str(&serde_json::to_string(trace).expect("trace serializes"));
        out.push('\n');
    }
    out
}

/// A line of `traces.jsonl` that did not parse.
#[derive(Debug, Error)]
#[error("traces line {line}: {source}")]
pub struct TraceParseError {
    pub line: usize,
    #[source]
    pub source: serde_json::Error,
}

/// Inverse of [`render_traces_jsonl`]; blank lines are skipped.
pub fn parse_traces_jsonl(text: &str) -> Result<Vec<RoutingTrace>, TraceParseError> {
    let mut traces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        traces.push(
            serde_json::from_str(line).map_err(|source| TraceParseError { line: i + 1, source })?,
        );
    }
    Ok(traces)
}

/// Pretty-printed JSON with a trailing newline; byte-stable for equal
/// reports.
pub fn render_report_json(report: &BenchmarkReport) -> String {
    let mut out = serde_json::to_string_pretty(report).expect("report serializes");
    out.push('\n');
    out
}

/// Inverse of [`render_report_json`].
pub fn parse_report_json(text: &str) -> Result<BenchmarkReport, serde_json::Error> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::ModelPrice;
    use crate::provider::{Completion, FinishReason, PromptMatcher, ProviderError, ScriptedProvider};
    use crate::types::{AnswerKind, AnswerValue, StepLabel};
    use rust_decimal::Decimal;

    fn question(id: &str, text: &str, gold: i64) -> Question {
        Question {
            id: id.into(),
            text: text.into(),
            kind: AnswerKind::Numeric,
            gold: AnswerValue::Numeric(Decimal::from(gold)),
        }
    }

    fn completion(text: &str, input: u64, output: u64) -> Completion {
        Completion {
            text: text.into(),
            usage: Usage::new(input, output),
            finish_reason: FinishReason::Stop,
        }
    }

    fn test_prices() -> PriceTable {
        let mut prices = PriceTable::new();
        let price = |o: i64| ModelPrice {
            input_per_million: Decimal::ZERO,
            output_per_million: Decimal::from(o),
        };
        prices.set("small-model", price(1)).unwrap();
        prices.set("large-model", price(2)).unwrap();
        prices
    }

    fn config(small: ScriptedProvider, large: ScriptedProvider) -> PipelineConfig {
        let mut config = PipelineConfig::new(
            RoleBinding::small(Arc::new(small), "small-model"),
            RoleBinding::large(Arc::new(large), "large-model"),
        );
        config.prices = test_prices();
        config
    }

    /// Marker unique to judgment prompts rendered from the default
    /// templates (both strategies start with the grader preamble).
    const JUDGMENT_MARKER: &str = "You are a strict grader";

    #[tokio::test]
    async fn accepted_draft_is_adopted_without_escalation() {
        let mut small = ScriptedProvider::new("small");
        small.register(PromptMatcher::Exact("What is 4+4?".into()), completion("#### 8", 20, 100));
        let mut large = ScriptedProvider::new("large");
        large.register(PromptMatcher::Substring(JUDGMENT_MARKER.into()), completion("Pass", 30, 10));
        let config = config(small, large);

        let outcome = run_question(&config, &question("q1", "What is 4+4?", 8)).await;
        let QuestionOutcome::Completed(trace) = outcome else {
            panic!("expected a completed trace, got {outcome:?}");
        };
        assert_eq!(trace.answered_by, AnsweredBy::SmallModel);
        assert_eq!(trace.final_answer, "#### 8");
        assert_eq!(trace.verdict.basis, VerdictBasis::ImmediatePass);
        assert!(!trace.augmented);
        assert_eq!(
            trace.state_history,
            ["start", "drafted", "judged", "accepted", "final"]
        );
        let roles: Vec<CallRole> = trace.ledger.entries().iter().map(|e| e.role).collect();
        assert_eq!(roles, [CallRole::Draft, CallRole::Verify]);
        assert_eq!(trace.ledger.output_tokens(), 110);
        assert_eq!(trace.ledger.input_tokens(), 50);
        // 100 output tokens at $1/M + 10 at $2/M.
        assert_eq!(trace.ledger.total_cost(), Decimal::from_str_exact("0.00012").unwrap());
    }

    #[tokio::test]
    async fn rejected_draft_escalates_and_adopts_large_answer() {
        let mut small = ScriptedProvider::new("small");
        small.register(PromptMatcher::Exact("What is 4+5?".into()), completion("#### 1", 20, 100));
        let mut large = ScriptedProvider::new("large");
        large.register(PromptMatcher::Substring(JUDGMENT_MARKER.into()), completion("Fail", 30, 10));
        large.register(PromptMatcher::Exact("What is 4+5?".into()), completion("#### 9", 40, 500));
        let config = config(small, large);

        let outcome = run_question(&config, &question("q2", "What is 4+5?", 9)).await;
        let QuestionOutcome::Completed(trace) = outcome else {
            panic!("expected a completed trace, got {outcome:?}");
        };
        assert_eq!(trace.answered_by, AnsweredBy::LargeModel);
        assert_eq!(trace.final_answer, "#### 9");
        assert_eq!(trace.verdict.basis, VerdictBasis::ImmediateFail);
        assert_eq!(
            trace.state_history,
            ["start", "drafted", "judged", "escalated", "final"]
        );
        let roles: Vec<CallRole> = trace.ledger.entries().iter().map(|e| e.role).collect();
        assert_eq!(roles, [CallRole::Draft, CallRole::Verify, CallRole::Escalate]);
        assert_eq!(trace.ledger.output_tokens(), 610);
    }

    #[tokio::test]
    async fn escalation_sends_bare_question_without_augmentation() {
        let mut small = ScriptedProvider::new("small");
        small.register(PromptMatcher::Substring("".into()), completion("wrong", 1, 1));
        let mut large = ScriptedProvider::new("large");
        large.register(PromptMatcher::Substring(JUDGMENT_MARKER.into()), completion("Fail", 1, 1));
        large.register(PromptMatcher::Exact("What is 1+1?".into()), completion("#### 2", 1, 1));
        let large = Arc::new(large);
        let mut config = PipelineConfig::new(
            RoleBinding::small(Arc::new(small), "small-model"),
            RoleBinding::large(large.clone(), "large-model"),
        );
        config.prices = test_prices();

        run_question(&config, &question("q", "What is 1+1?", 2)).await;
        let served = large.served_requests();
        assert_eq!(served.len(), 2);
        assert_eq!(served[1].messages.len(), 1, "escalation is a fresh single-message call");
        assert_eq!(served[1].last_user_message(), Some("What is 1+1?"));
        assert_eq!(served[1].temperature, DRAFT_TEMPERATURE);
        assert!(served[1].reasoning_enabled, "escalation uses large-tier reasoning");
        // The judgment call, by contrast, runs cold and without reasoning.
        assert_eq!(served[0].temperature, JUDGE_TEMPERATURE);
        assert!(!served[0].reasoning_enabled);
    }

    #[tokio::test]
    async fn verifier_outage_forces_escalation_with_zero_usage_entry() {
        let mut small = ScriptedProvider::new("small");
        small.register(PromptMatcher::Substring("".into()), completion("draft", 5, 50));
        let mut large = ScriptedProvider::new("large");
        // Only the escalation prompt is scripted: the judgment call fails.
        large.register(PromptMatcher::Exact("Q?".into()), completion("#### 3", 7, 70));
        let config = config(small, large);

        let outcome = run_question(&config, &question("q", "Q?", 3)).await;
        let QuestionOutcome::Completed(trace) = outcome else {
            panic!("expected a completed trace, got {outcome:?}");
        };
        assert_eq!(trace.verdict.basis, VerdictBasis::ParseFailure);
        assert_eq!(trace.answered_by, AnsweredBy::LargeModel);
        let entries = trace.ledger.entries();
        assert_eq!(entries.len(), 3, "outage still leaves a verify entry");
        assert_eq!(entries[1].role, CallRole::Verify);
        assert_eq!(entries[1].usage, Usage::default());
        assert_eq!(entries[1].cost_usd, Decimal::ZERO);
        assert_eq!(trace.ledger.output_tokens(), 120);
    }

    #[tokio::test]
    async fn draft_failure_fails_the_question() {
        let small = ScriptedProvider::new("small"); // no scripts: every call errors
        let large = ScriptedProvider::new("large");
        let config = config(small, large);
        let outcome = run_question(&config, &question("q", "Q?", 1)).await;
        let QuestionOutcome::Failed(failure) = outcome else {
            panic!("expected failure, got {outcome:?}");
        };
        assert_eq!(failure.stage, CallRole::Draft);
        assert_eq!(failure.question_id, "q");
    }

    #[tokio::test]
    async fn escalation_failure_fails_the_question() {
        let mut small = ScriptedProvider::new("small");
        small.register(PromptMatcher::Substring("".into()), completion("draft", 1, 1));
        let mut large = ScriptedProvider::new("large");
        // Judgment succeeds (rejecting), escalation has no script.
        large.register(PromptMatcher::Substring(JUDGMENT_MARKER.into()), completion("Fail", 1, 1));
        let config = config(small, large);
        let outcome = run_question(&config, &question("q", "Q?", 1)).await;
        let QuestionOutcome::Failed(failure) = outcome else {
            panic!("expected failure, got {outcome:?}");
        };
        assert_eq!(failure.stage, CallRole::Escalate);
    }

    fn step_config(small: ScriptedProvider, large: ScriptedProvider, augment: bool) -> PipelineConfig {
        let mut config = config(small, large);
        config.judge.strategy = JudgeStrategy::StepByStep;
        config.judge.augment_escalation = augment;
        config
    }

    const STEP_TRANSCRIPT: &str =
        "Step 1: Alpha holds [CORRECT]\nStep 2: Beta holds [CORRECT]\nStep 3: Gamma slips [INCORRECT]";

    #[tokio::test]
    async fn step_rejection_augments_escalation_with_verified_steps() {
        let mut small = ScriptedProvider::new("small");
        small.register(PromptMatcher::Substring("".into()), completion("draft", 1, 1));
        let mut large = ScriptedProvider::new("large");
        large.register(
            PromptMatcher::Substring(JUDGMENT_MARKER.into()),
            completion(STEP_TRANSCRIPT, 1, 1),
        );
        large.register(
            PromptMatcher::Substring("verified as correct".into()),
            completion("#### 6", 1, 1),
        );
        let large = Arc::new(large);
        let mut config = PipelineConfig::new(
            RoleBinding::small(Arc::new(small), "small-model"),
            RoleBinding::large(large.clone(), "large-model"),
        );
        config.prices = test_prices();
        config.judge.strategy = JudgeStrategy::StepByStep;
        config.judge.augment_escalation = true;

        let outcome = run_question(&config, &question("q", "How many?", 6)).await;
        let QuestionOutcome::Completed(trace) = outcome else {
            panic!("expected a completed trace, got {outcome:?}");
        };
        assert!(trace.augmented);
        assert_eq!(trace.verdict.basis, VerdictBasis::StepFailed(3));
        let steps = trace.verdict.steps.as_ref().unwrap();
        assert_eq!(steps.len(), 3);
        assert_eq!(steps.steps()[2].label, StepLabel::Incorrect);

        let served = large.served_requests();
        let escalation = served[1].last_user_message().unwrap().to_string();
        assert!(escalation.contains("How many?"));
        assert!(escalation.contains("- Alpha holds"));
        assert!(escalation.contains("- Beta holds"));
        assert!(!escalation.contains("Gamma"), "failed step must not be carried forward");
        assert!(!escalation.contains("[CORRECT]"), "labels are stripped");
    }

    #[tokio::test]
    async fn augmentation_off_sends_bare_question_even_with_steps() {
        let mut small = ScriptedProvider::new("small");
        small.register(PromptMatcher::Substring("".into()), completion("draft", 1, 1));
        let mut large = ScriptedProvider::new("large");
        large.register(
            PromptMatcher::Substring(JUDGMENT_MARKER.into()),
            completion(STEP_TRANSCRIPT, 1, 1),
        );
        large.register(PromptMatcher::Exact("How many?".into()), completion("#### 6", 1, 1));
        let large = Arc::new(large);
        let mut config = PipelineConfig::new(
            RoleBinding::small(Arc::new(small), "small-model"),
            RoleBinding::large(large.clone(), "large-model"),
        );
        config.prices = test_prices();
        config.judge.strategy = JudgeStrategy::StepByStep;
        config.judge.augment_escalation = false;

        let outcome = run_question(&config, &question("q", "How many?", 6)).await;
        let QuestionOutcome::Completed(trace) = outcome else {
            panic!("expected a completed trace, got {outcome:?}");
        };
        assert!(!trace.augmented);
        assert_eq!(large.served_requests()[1].last_user_message(), Some("How many?"));
    }

    #[tokio::test]
    async fn first_step_failure_escalates_unaugmented() {
        let mut small = ScriptedProvider::new("small");
        small.register(PromptMatcher::Substring("".into()), completion("draft", 1, 1));
        let mut large = ScriptedProvider::new("large");
        large.register(
            PromptMatcher::Substring(JUDGMENT_MARKER.into()),
            completion("Step 1: Bad start [INCORRECT]", 1, 1),
        );
        large.register(PromptMatcher::Exact("How many?".into()), completion("#### 6", 1, 1));
        let config = step_config(small, large, true);

        let outcome = run_question(&config, &question("q", "How many?", 6)).await;
        let QuestionOutcome::Completed(trace) = outcome else {
            panic!("expected a completed trace, got {outcome:?}");
        };
        assert!(!trace.augmented, "no verified steps to carry");
        assert_eq!(trace.verdict.basis, VerdictBasis::StepFailed(1));
    }

    fn benchmark_fixtures() -> (Vec<Question>, PipelineConfig) {
        let questions = vec![
            question("q1", "What is 4+4?", 8),
            question("q2", "What is 4+5?", 9),
            question("q3", "What is 2+2?", 4),
        ];
        let mut small = ScriptedProvider::new("small");
        small.register(
            PromptMatcher::Exact("What is 4+4?".into()),
            completion("ALPHA #### 8", 20, 100),
        );
        small.register(
            PromptMatcher::Exact("What is 4+5?".into()),
            completion("BETA #### 1", 20, 100),
        );
        small.register(
            PromptMatcher::Exact("What is 2+2?".into()),
            completion("GAMMA #### 5", 20, 100),
        );
        let mut large = ScriptedProvider::new("large");
        large.register(PromptMatcher::Substring("ALPHA".into()), completion("Pass", 30, 10));
        large.register(PromptMatcher::Substring("BETA".into()), completion("Fail", 30, 10));
        large.register(PromptMatcher::Substring("GAMMA".into()), completion("Pass", 30, 10));
        large.register(PromptMatcher::Exact("What is 4+5?".into()), completion("#### 9", 40, 500));
        (questions, config(small, large))
    }

    #[tokio::test]
    async fn benchmark_aggregates_hand_computed_metrics() {
        let (questions, config) = benchmark_fixtures();
        let output = run_benchmark(&config, &questions).await.unwrap();
        let report = &output.report;

        // q1 correct (adopted), q2 correct (escalated), q3 wrong (false
        // pass adopted): 2/3 = 66.67%.
        assert_eq!(report.accuracy, 66.67);
        assert_eq!(report.n, 3);
        assert_eq!(report.n_failed, 0);
        assert!((report.escalation_rate - 1.0 / 3.0).abs() < 1e-15);
        // Output tokens: 110 + 610 + 110 = 830; 830/3 rounds to 277.
        assert_eq!(report.mean_output_tokens, 277);
        // Input tokens: 50 + 90 + 50 = 190; 190/3 rounds to 63.
        assert_eq!(report.mean_input_tokens, 63);
        // Cost: (0.00012 + 0.00112 + 0.00012) * 100 / 3 = 0.04533… -> 0.045.
        assert_eq!(report.cost_per_100, Decimal::from_str_exact("0.045").unwrap());
        assert_eq!(report.strategy, JudgeStrategy::Immediate);
        assert_eq!(report.model_ids.small, "small-model");
        assert_eq!(report.model_ids.large, "large-model");

        // Traces in dataset order regardless of completion order.
        let ids: Vec<&str> = output.traces.iter().map(|t| t.question_id.as_str()).collect();
        assert_eq!(ids, ["q1", "q2", "q3"]);
        assert!(output.failures.is_empty());
    }

    #[tokio::test]
    async fn benchmark_renders_byte_identical_outputs_across_runs() {
        let (questions, config) = benchmark_fixtures();
        let a = run_benchmark(&config, &questions).await.unwrap();
        let (questions2, config2) = benchmark_fixtures();
        let b = run_benchmark(&config2, &questions2).await.unwrap();
        assert_eq!(render_traces_jsonl(&a.traces), render_traces_jsonl(&b.traces));
        assert_eq!(render_report_json(&a.report), render_report_json(&b.report));
    }

    #[tokio::test]
    async fn traces_round_trip_through_jsonl() {
        let (questions, config) = benchmark_fixtures();
        let output = run_benchmark(&config, &questions).await.unwrap();
        let rendered = render_traces_jsonl(&output.traces);
        let parsed = parse_traces_jsonl(&rendered).unwrap();
        assert_eq!(parsed, output.traces);
        let report_rendered = render_report_json(&output.report);
        assert_eq!(parse_report_json(&report_rendered).unwrap(), output.report);
    }

    #[tokio::test]
    async fn empty_dataset_is_an_error() {
        let (_, config) = benchmark_fixtures();
        assert!(matches!(
            run_benchmark(&config, &[]).await,
            Err(PipelineError::EmptyDataset)
        ));
    }

    #[tokio::test]
    async fn all_failed_run_is_an_error() {
        let small = ScriptedProvider::new("small"); // unscripted: all drafts fail
        let large = ScriptedProvider::new("large");
        let config = config(small, large);
        let questions = vec![question("q1", "A?", 1), question("q2", "B?", 2)];
        match run_benchmark(&config, &questions).await {
            Err(PipelineError::NoCompletedQuestions { n_failed }) => assert_eq!(n_failed, 2),
            other => panic!("expected NoCompletedQuestions, got {other:?}"),
        }
    }

    #[tokio::test]
    async fn partial_failure_is_reported_not_fatal() {
        let (questions, config) = benchmark_fixtures();
        let mut questions = questions;
        questions.push(question("q4", "Unscripted?", 1));
        let output = run_benchmark(&config, &questions).await.unwrap();
        assert_eq!(output.report.n, 3);
        assert_eq!(output.report.n_failed, 1);
        assert_eq!(output.failures.len(), 1);
        assert_eq!(output.failures[0].question_id, "q4");
        assert_eq!(output.failures[0].stage, CallRole::Draft);
    }

    #[tokio::test]
    async fn provider_error_text_reaches_the_failure() {
        let small = ScriptedProvider::new("small");
        let large = ScriptedProvider::new("large");
        let config = config(small, large);
        let QuestionOutcome::Failed(failure) =
            run_question(&config, &question("q", "Q?", 1)).await
        else {
            panic!("expected failure");
        };
        // The scripted provider's no-script error shape, not invented text.
        let expected = ProviderError::NoScript { preview: "Q?".into() };
        assert_eq!(failure.error, expected.to_string());
    }
}
