//! Verification prompts and verdict parsing.
//!
//! Everything in this module is pure string work: building the prompt that
//! asks the verifier to judge a draft, and parsing what came back into a
//! [`Verdict`]. Two judgment styles exist:
//!
//! * **immediate** — one holistic call answering with a single pass/fail
//!   token and no intermediate reasoning;
//! * **step-by-step** — the verifier rewrites the draft as labeled steps
//!   and stops at the first incorrect one. One verifier call either way.
//!
//! Parsing is deliberately conservative: anything ambiguous (both verdict
//! tokens present, no labels found, an empty step) is a parse failure, and
//! parse failures always reject — a draft is only ever adopted on an
//! unambiguous pass.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::types::{
    Draft, JudgeStrategy, JudgmentPrompt, Question, StepLabel, StepSequence, Verdict,
    VerdictBasis, VerifiedStep,
};

/// The literal tokens the verifier is expected to emit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictTokens {
    /// Standalone word meaning the draft is correct (default `Pass`).
    pub pass: String,
    /// Standalone word meaning the draft is wrong (default `Fail`).
    pub fail: String,
    /// Exact-case label closing a correct step (default `[CORRECT]`).
    pub correct: String,
    /// Exact-case label closing an incorrect step (default `[INCORRECT]`).
    pub incorrect: String,
}

impl Default for VerdictTokens {
    fn default() -> Self {
        VerdictTokens {
            pass: "Pass".to_string(),
            fail: "Fail".to_string(),
            correct: "[CORRECT]".to_string(),
            incorrect: "[INCORRECT]".to_string(),
        }
    }
}

/// Why a template or token set was rejected.
#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("{template} template must contain {placeholder} exactly once (found {found})")]
    PlaceholderCount { template: &'static str, placeholder: &'static str, found: usize },
    #[error("verdict tokens must be non-empty and mutually non-overlapping")]
    BadTokens,
    #[error("failed to read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl VerdictTokens {
    /// Checks tokens are non-empty and neither step label contains the
    /// other, which would make label scanning ambiguous.
    pub fn validate(&self) -> Result<(), TemplateError> {
        let nonempty = !self.pass.trim().is_empty()
            && !self.fail.trim().is_empty()
            && !self.correct.trim().is_empty()
            && !self.incorrect.trim().is_empty();
        if !nonempty
            || self.pass.eq_ignore_ascii_case(&self.fail)
            || self.correct == self.incorrect
            || self.correct.contains(&self.incorrect)
            || self.incorrect.contains(&self.correct)
        {
            return Err(TemplateError::BadTokens);
        }
        Ok(())
    }
}

const DEFAULT_IMMEDIATE_TEMPLATE: &str = "\
You are a strict grader. Decide whether the draft answer below answers the question correctly.

Question:
{question}

Draft answer:
{draft}

Reply with exactly one word: {pass_token} if the draft answer is correct, {fail_token} if it is not. Do not explain.";

const DEFAULT_STEP_TEMPLATE: &str = "\
You are a strict grader. Rewrite the draft answer below as its individual reasoning steps, in their original order, and judge each step.

Question:
{question}

Draft answer:
{draft}

Write one step per line in the form 'Step N: <step> LABEL', where LABEL is {correct_label} if the step is correct so far and {incorrect_label} if it is wrong. Stop immediately after the first {incorrect_label} step.";

const DEFAULT_ESCALATION_TEMPLATE: &str = "{question}";

const DEFAULT_ESCALATION_AUGMENTED_TEMPLATE: &str = "\
{question}

The following partial reasoning toward the answer has already been verified as correct:
{steps}

You may build on the verified reasoning. Answer the question.";

/// The four prompt templates the cascade renders. Constructed via
/// [`PromptTemplates::new`] (or [`Default`]) so placeholder counts are
/// always valid: judgment templates take `{question}` and `{draft}` exactly
/// once, escalation takes `{question}` once, and the augmented variant adds
/// `{steps}` once. Token placeholders (`{pass_token}`, `{fail_token}`,
/// `{correct_label}`, `{incorrect_label}`) are optional.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplates", into = "RawTemplates")]
pub struct PromptTemplates {
    immediate: String,
    step: String,
    escalation: String,
    escalation_augmented: String,
}

#[derive(Serialize, Deserialize)]
struct RawTemplates {
    immediate: String,
    step: String,
    escalation: String,
    escalation_augmented: String,
}

impl TryFrom<RawTemplates> for PromptTemplates {
    type Error = TemplateError;
    fn try_from(raw: RawTemplates) -> Result<Self, TemplateError> {
        PromptTemplates::new(raw.immediate, raw.step, raw.escalation, raw.escalation_augmented)
    }
}

impl From<PromptTemplates> for RawTemplates {
    fn from(t: PromptTemplates) -> RawTemplates {
        RawTemplates {
            immediate: t.immediate,
            step: t.step,
            escalation: t.escalation,
            escalation_augmented: t.escalation_augmented,
        }
    }
}

fn count_occurrences(haystack: &str, needle: &str) -> usize {
    haystack.matches(needle).count()
}

fn require_count(
    template: &'static str,
    text: &str,
    placeholder: &'static str,
    want: usize,
) -> Result<(), TemplateError> {
    let found = count_occurrences(text, placeholder);
    if found != want {
        return Err(TemplateError::PlaceholderCount { template, placeholder, found });
    }
    Ok(())
}

impl PromptTemplates {
    /// Builds a validated template set.
    ///
    /// # Errors
    ///
    /// Returns [`TemplateError::PlaceholderCount`] when a template has the
    /// wrong number of required placeholders.
    pub fn new(
        immediate: String,
        step: String,
        escalation: String,
        escalation_augmented: String,
    ) -> Result<Self, TemplateError> {
        require_count("immediate", &immediate, "{question}", 1)?;
        require_count("immediate", &immediate, "{draft}", 1)?;
        require_count("step", &step, "{question}", 1)?;
        require_count("step", &step, "{draft}", 1)?;
        require_count("escalation", &escalation, "{question}", 1)?;
        require_count("escalation", &escalation, "{steps}", 0)?;
        require_count("escalation_augmented", &escalation_augmented, "{question}", 1)?;
        require_count("escalation_augmented", &escalation_augmented, "{steps}", 1)?;
        Ok(PromptTemplates { immediate, step, escalation, escalation_augmented })
    }

    /// Reads one template file per prompt, falling back to the built-in
    /// text for any path given as `None`.
    ///
    /// # Errors
    ///
    /// Fails on unreadable files or invalid placeholder counts.
    pub fn from_files(
        immediate: Option<&std::path::Path>,
        step: Option<&std::path::Path>,
        escalation: Option<&std::path::Path>,
        escalation_augmented: Option<&std::path::Path>,
    ) -> Result<Self, TemplateError> {
        let read = |path: Option<&std::path::Path>, fallback: &str| -> Result<String, TemplateError> {
            match path {
                Some(p) => std::fs::read_to_string(p).map_err(|source| TemplateError::Io {
                    path: p.display().to_string(),
                    source,
                }),
                None => Ok(fallback.to_string()),
            }
        };
        PromptTemplates::new(
            read(immediate, DEFAULT_IMMEDIATE_TEMPLATE)?,
            read(step, DEFAULT_STEP_TEMPLATE)?,
            read(escalation, DEFAULT_ESCALATION_TEMPLATE)?,
            read(escalation_augmented, DEFAULT_ESCALATION_AUGMENTED_TEMPLATE)?,
        )
    }
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates::new(
            DEFAULT_IMMEDIATE_TEMPLATE.to_string(),
            DEFAULT_STEP_TEMPLATE.to_string(),
            DEFAULT_ESCALATION_TEMPLATE.to_string(),
            DEFAULT_ESCALATION_AUGMENTED_TEMPLATE.to_string(),
        )
        .expect("built-in templates are valid")
    }
}

/// Everything the pipeline needs to build judgment/escalation prompts and
/// read the verifier's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub strategy: JudgeStrategy,
    /// Carry verified steps into the escalation prompt (step-by-step only).
    pub augment_escalation: bool,
    #[serde(default)]
    pub tokens: VerdictTokens,
    #[serde(default)]
    pub templates: PromptTemplates,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            strategy: JudgeStrategy::Immediate,
            augment_escalation: false,
            tokens: VerdictTokens::default(),
            templates: PromptTemplates::default(),
        }
    }
}

/// Substitutes placeholder tokens found in the template. Placeholder
/// markers inside substituted *values* are left untouched — only the
/// template text is scanned.
fn render(template: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while !rest.is_empty() {
        let mut earliest: Option<(usize, &str, &str)> = None;
        for (placeholder, value) in substitutions {
            if let Some(pos) = rest.find(placeholder) {
                let replace = match earliest {
                    Some((best, _, _)) => pos < best,
                    None => true,
                };
                if replace {
                    earliest = Some((pos, placeholder, value));
                }
            }
        }
        match earliest {
            Some((pos, placeholder, value)) => {
                out.push_str(&rest[..pos]);
                out.push_str(value);
                rest = &rest[pos + placeholder.len()..];
            }
            None => {
                out.push_str(rest);
                break 'outer;
            }
        }
    }
    out
}

/// Renders the single-call pass/fail judgment prompt for a draft.
pub fn build_immediate_prompt(cfg: &JudgeConfig, question: &Question, draft: &Draft) -> JudgmentPrompt {
    let text = render(
        &cfg.templates.immediate,
        &[
            ("{question}", &question.text),
            ("{draft}", &draft.answer_text),
            ("{pass_token}", &cfg.tokens.pass),
            ("{fail_token}", &cfg.tokens.fail),
        ],
    );
    JudgmentPrompt { text, strategy: JudgeStrategy::Immediate }
}

/// Renders the step-decomposition judgment prompt for a draft.
pub fn build_step_prompt(cfg: &JudgeConfig, question: &Question, draft: &Draft) -> JudgmentPrompt {
    let text = render(
        &cfg.templates.step,
        &[
            ("{question}", &question.text),
            ("{draft}", &draft.answer_text),
            ("{correct_label}", &cfg.tokens.correct),
            ("{incorrect_label}", &cfg.tokens.incorrect),
        ],
    );
    JudgmentPrompt { text, strategy: JudgeStrategy::StepByStep }
}

/// Renders the judgment prompt for the configured strategy.
pub fn build_judgment_prompt(cfg: &JudgeConfig, question: &Question, draft: &Draft) -> JudgmentPrompt {
    match cfg.strategy {
        JudgeStrategy::Immediate => build_immediate_prompt(cfg, question, draft),
        JudgeStrategy::StepByStep => build_step_prompt(cfg, question, draft),
    }
}

/// Parses a single-call judgment response.
///
/// Case-insensitive scan for the pass/fail tokens as standalone words:
/// exactly one kind present yields that verdict; both present or neither
/// present is a parse failure, which rejects.
pub fn parse_immediate_verdict(cfg: &JudgeConfig, response: &str) -> Verdict {
    let word = |token: &str| {
        Regex::new(&format!(r"(?i)\b{}\b", regex::escape(token)))
            .expect("escaped token is a valid pattern")
    };
    let saw_pass = word(&cfg.tokens.pass).is_match(response);
    let saw_fail = word(&cfg.tokens.fail).is_match(response);
    let basis = match (saw_pass, saw_fail) {
        (true, false) => VerdictBasis::ImmediatePass,
        (false, true) => VerdictBasis::ImmediateFail,
        _ => VerdictBasis::ParseFailure,
    };
    Verdict::from_basis(basis, None)
}

/// Why a step transcript failed to parse.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StepParseError {
    #[error("no step labels found")]
    NoLabels,
    #[error("label at byte {at} terminates an empty step")]
    EmptyStep { at: usize },
}

static STEP_PREFIX_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^step\s*\d+\s*[:.)]\s*").unwrap());

/// Parses a step-by-step transcript into a [`StepSequence`].
///
/// The transcript is scanned for the two step labels in order of
/// appearance (exact case). Each label closes the step whose text is
/// everything since the previous label; a leading `Step N:` prefix is
/// stripped. Scanning stops at the first incorrect label — anything the
/// model wrote after it is ignored. A transcript with no labels, or a
/// label closing an empty step (two labels back to back), fails to parse.
///
/// # Errors
///
/// Returns [`StepParseError`]; callers map it to a rejecting
/// [`VerdictBasis::ParseFailure`].
pub fn parse_step_labels(cfg: &JudgeConfig, response: &str) -> Result<StepSequence, StepParseError> {
    let mut labels: Vec<(usize, StepLabel, usize)> = Vec::new();
    for (pos, _) in response.match_indices(&cfg.tokens.correct) {
        labels.push((pos, StepLabel::Correct, cfg.tokens.correct.len()));
    }
    for (pos, _) in response.match_indices(&cfg.tokens.incorrect) {
        labels.push((pos, StepLabel::Incorrect, cfg.tokens.incorrect.len()));
    }
    labels.sort_by_key(|&(pos, _, _)| pos);
    if labels.is_empty() {
        return Err(StepParseError::NoLabels);
    }
    let mut steps = Vec::new();
    let mut cursor = 0;
    for (pos, label, len) in labels {
        if pos < cursor {
            // Token overlapping the previous label; already consumed.
            continue;
        }
        let segment = response[cursor..pos].trim();
        let text = STEP_PREFIX_RE.replace(segment, "").trim().to_string();
        if text.is_empty() {
            return Err(StepParseError::EmptyStep { at: pos });
        }
        steps.push(VerifiedStep { text, label });
        cursor = pos + len;
        if label == StepLabel::Incorrect {
            break;
        }
    }
    StepSequence::new(steps).map_err(|_| StepParseError::NoLabels)
}

/// Parses a step-by-step judgment response into a verdict: all steps
/// correct accepts; a failed step rejects with its 1-based index; an
/// unparseable transcript rejects as a parse failure.
pub fn parse_step_verdict(cfg: &JudgeConfig, response: &str) -> Verdict {
    match parse_step_labels(cfg, response) {
        Ok(seq) => match seq.failed_step() {
            None => Verdict::from_basis(VerdictBasis::AllStepsCorrect, Some(seq)),
            Some(index) => Verdict::from_basis(VerdictBasis::StepFailed(index), Some(seq)),
        },
        Err(_) => Verdict::from_basis(VerdictBasis::ParseFailure, None),
    }
}

/// Parses the verifier response for the configured strategy.
pub fn parse_verdict(cfg: &JudgeConfig, response: &str) -> Verdict {
    match cfg.strategy {
        JudgeStrategy::Immediate => parse_immediate_verdict(cfg, response),
        JudgeStrategy::StepByStep => parse_step_verdict(cfg, response),
    }
}

/// Renders a step sequence back into transcript form (`Step N: <text>
/// <label>` per line). Parsing the result recovers the sequence exactly,
/// which is how transcript fixtures are generated.
pub fn render_step_sequence(cfg: &JudgeConfig, seq: &StepSequence) -> String {
    let mut out = String::new();
    for (i, step) in seq.steps().iter().enumerate() {
        let label = match step.label {
            StepLabel::Correct => &cfg.tokens.correct,
            StepLabel::Incorrect => &cfg.tokens.incorrect,
        };
        out.push_str(&format!("Step {}: {} {}\n", i + 1, step.text, label));
    }
    out
}

/// Builds the prompt for the large model after a rejection.
///
/// With no verified steps (immediate judgments, parse failures, or a
/// first-step failure) this is the bare question. With verified steps and
/// augmentation enabled, the prompt carries the correct-labeled step texts
/// forward — labels stripped, original order — in a marked section.
pub fn build_escalation_prompt(
    cfg: &JudgeConfig,
    question: &Question,
    verified: Option<&StepSequence>,
) -> String {
    let correct_texts: Vec<&str> = match verified {
        Some(seq) => seq.correct_step_texts(),
        None => Vec::new(),
    };
    if correct_texts.is_empty() {
        return render(&cfg.templates.escalation, &[("{question}", &question.text)]);
    }
    let steps = correct_texts
        .iter()
        .map(|t| format!("- {t}"))
        .collect::<Vec<_>>()
        .join("\n");
    render(
        &cfg.templates.escalation_augmented,
        &[("{question}", &question.text), ("{steps}", &steps)],
    )
}
