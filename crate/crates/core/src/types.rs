//! Domain types shared across the cascade: questions, drafts, verdicts,
//! token usage, and the per-question routing trace.
//!
//! Everything here is a plain value type. Construction helpers enforce the
//! structural invariants (e.g. a [`Verdict`]'s decision always agrees with its
//! basis) so the rest of the crate can pattern-match without re-checking.

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::ledger::CostLedger;

/// What shape of answer a question expects, and therefore which extraction
/// and grading rules apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    /// A single number; graded with a small absolute tolerance.
    Numeric,
    /// A single letter from a fixed alphabet (multiple choice).
    Choice,
    /// Short free text; graded by normalized exact match.
    Free,
}

/// An answer value in canonical form. Gold answers and extracted answers
/// share this representation so grading is a comparison of like with like.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum AnswerValue {
    /// Exact decimal, so `0.1` survives a round trip untouched.
    Numeric(Decimal),
    /// Canonical uppercase choice letter.
    Choice(char),
    /// Free text as given; normalization happens at grading time.
    Free(String),
}

impl AnswerValue {
    /// The kind this value belongs to.
    pub fn kind(&self) -> AnswerKind {
        match self {
            AnswerValue::Numeric(_) => AnswerKind::Numeric,
            AnswerValue::Choice(_) => AnswerKind::Choice,
            AnswerValue::Free(_) => AnswerKind::Free,
        }
    }
}

/// The reference answer a question is graded against.
pub type GoldAnswer = AnswerValue;

/// An answer recovered from free-form model output, with the byte range of
/// the response it was read from (for audit and debugging).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedAnswer {
    pub value: AnswerValue,
    /// Half-open byte range `[start, end)` into the source response.
    pub source_span: (usize, usize),
}

/// A benchmark question: stable id, prompt text, and the gold answer to
/// grade against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub kind: AnswerKind,
    pub gold: GoldAnswer,
}

/// Provider-reported token counts for a single completion call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl Usage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Usage { input_tokens, output_tokens }
    }
}

/// The small model's answer to a question, before any verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Draft {
    /// Verbatim model output (trailing whitespace trimmed, nothing else).
    pub answer_text: String,
    /// Answer recovered from `answer_text`, if extraction succeeded.
    pub extracted: Option<ExtractedAnswer>,
    pub usage: Usage,
}

/// How the verifier is asked to judge a draft.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeStrategy {
    /// One holistic Pass/Fail call with no intermediate reasoning.
    Immediate,
    /// Decompose the draft into steps and label each one.
    StepByStep,
}

/// A fully rendered verification prompt, tagged with the strategy that
/// produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgmentPrompt {
    pub text: String,
    pub strategy: JudgeStrategy,
}

/// Label assigned to one reasoning step by the verifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepLabel {
    Correct,
    Incorrect,
}

/// One labeled step of a step-by-step judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedStep {
    pub text: String,
    pub label: StepLabel,
}

/// An ordered sequence of labeled steps. Judging stops at the first
/// incorrect step, so a valid sequence contains at most one
/// [`StepLabel::Incorrect`] and only in final position; every step text is
/// non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepSequence(Vec<VerifiedStep>);

/// Why a [`StepSequence`] could not be built.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StepSequenceError {
    #[error("step sequence must contain at least one step")]
    Empty,
    #[error("step {index} has empty text")]
    EmptyStepText { index: usize },
    #[error("step {index} is labeled incorrect but is not the final step")]
    IncorrectNotLast { index: usize },
}

impl StepSequence {
    /// Builds a sequence, enforcing the truncation invariant.
    pub fn new(steps: Vec<VerifiedStep>) -> Result<Self, StepSequenceError> {
        if steps.is_empty() {
            return Err(StepSequenceError::Empty);
        }
        for (i, step) in steps.iter().enumerate() {
            if step.text.trim().is_empty() {
                return Err(StepSequenceError::EmptyStepText { index: i + 1 });
            }
            if step.label == StepLabel::Incorrect && i + 1 != steps.len() {
                return Err(StepSequenceError::IncorrectNotLast { index: i + 1 });
            }
        }
        Ok(StepSequence(steps))
    }

    pub fn steps(&self) -> &[VerifiedStep] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every step is labeled correct.
    pub fn all_correct(&self) -> bool {
        self.0.iter().all(|s| s.label == StepLabel::Correct)
    }

    /// 1-based index of the incorrect step, if the sequence has one.
    pub fn failed_step(&self) -> Option<usize> {
        self.0
            .iter()
            .position(|s| s.label == StepLabel::Incorrect)
            .map(|i| i + 1)
    }

    /// Texts of the correct-labeled steps, in original order.
    pub fn correct_step_texts(&self) -> Vec<&str> {
        self.0
            .iter()
            .filter(|s| s.label == StepLabel::Correct)
            .map(|s| s.text.as_str())
            .collect()
    }
}

/// The routing decision a verdict resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// Adopt the draft as the final answer.
    Accept,
    /// Discard the draft's conclusion and escalate.
    Reject,
}

/// What the verifier's output actually said. The decision is derived from
/// this, never stored independently of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "basis", content = "detail", rename_all = "snake_case")]
pub enum VerdictBasis {
    ImmediatePass,
    ImmediateFail,
    AllStepsCorrect,
    /// 1-based index of the first step labeled incorrect.
    StepFailed(usize),
    /// The verifier's output could not be parsed (or the call itself
    /// failed); unparseable verdicts always reject.
    ParseFailure,
}

impl VerdictBasis {
    /// The decision this basis entails: accept only on a clean pass.
    pub fn decision(&self) -> Decision {
        match self {
            VerdictBasis::ImmediatePass | VerdictBasis::AllStepsCorrect => Decision::Accept,
            VerdictBasis::ImmediateFail
            | VerdictBasis::StepFailed(_)
            | VerdictBasis::ParseFailure => Decision::Reject,
        }
    }
}

/// The verifier's judgment of one draft.
///
/// Construct via [`Verdict::from_basis`] so `decision` and `basis` cannot
/// disagree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    #[serde(flatten)]
    pub basis: VerdictBasis,
    /// Labeled steps, present only for step-by-step judgments that parsed.
    pub steps: Option<StepSequence>,
}

impl Verdict {
    /// Builds a verdict whose decision is derived from its basis.
    pub fn from_basis(basis: VerdictBasis, steps: Option<StepSequence>) -> Self {
        Verdict { decision: basis.decision(), basis, steps }
    }
}

/// Which tier produced the final answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnsweredBy {
    SmallModel,
    LargeModel,
}

/// Complete record of how one question moved through the cascade.
///
/// Serialized as one JSON object per line in `traces.jsonl`; field names
/// here are a stable interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingTrace {
    pub question_id: String,
    /// Names of the states visited, in order, `start` through `final`.
    pub state_history: Vec<String>,
    pub verdict: Verdict,
    pub answered_by: AnsweredBy,
    pub final_answer: String,
    /// True when the escalation prompt carried verified steps forward.
    pub augmented: bool,
    pub ledger: CostLedger,
}
