//! Benchmark harness: dataset loading, answer extraction, and grading.
//!
//! Extraction is deliberately forgiving about *where* an answer appears but
//! strict about *what* counts as one. Both extractors are last-match-wins
//! within each rule, and rules are tried in priority order, because models
//! frequently restate candidate answers while reasoning and the final
//! statement is the one they commit to.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use rust_decimal::Decimal;
use serde::Deserialize;

use crate::types::{AnswerKind, AnswerValue, ExtractedAnswer, GoldAnswer, Question};

/// Absolute tolerance for numeric grading: |extracted - gold| <= 1e-6.
pub const NUMERIC_TOLERANCE: Decimal = Decimal::from_parts(1, 0, 0, false, 6);

/// Choice alphabet used when a dataset doesn't say otherwise.
pub const DEFAULT_CHOICE_ALPHABET: [char; 4] = ['A', 'B', 'C', 'D'];

/// Why a dataset failed to load.
#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
    #[error("{path}:{line}: duplicate question id {id:?}")]
    DuplicateId { path: String, line: usize, id: String },
}

/// Raised when an answer is graded against a gold of a different kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("cannot grade {got:?} answer against {expected:?} gold")]
pub struct KindMismatch {
    pub expected: AnswerKind,
    pub got: AnswerKind,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    question: String,
    answer: serde_json::Value,
    kind: AnswerKind,
}

/// Loads a question set from JSONL: one object per line with fields
/// `id`, `question`, `answer`, `kind` (`numeric` | `choice` | `free`).
/// Numeric answers may be JSON numbers or strings; strings preserve exact
/// decimal values. Blank lines are ignored.
///
/// # Errors
///
/// Fails on unreadable files, malformed lines, answers that don't fit
/// their declared kind, and duplicate ids.
pub fn load_dataset(path: &Path) -> Result<Vec<Question>, DatasetError> {
    let display = path.display().to_string();
    let raw = std::fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: display.clone(), source })?;
    let mut questions = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord = serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
            path: display.clone(),
            line: line_no,
            reason: e.to_string(),
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(DatasetError::DuplicateId {
                path: display.clone(),
                line: line_no,
                id: record.id,
            });
        }
        let gold = parse_gold(&record.answer, record.kind).map_err(|reason| {
            DatasetError::Malformed { path: display.clone(), line: line_no, reason }
        })?;
        questions.push(Question {
            id: record.id,
            text: record.question,
            kind: record.kind,
            gold,
        });
    }
    Ok(questions)
}

fn parse_gold(answer: &serde_json::Value, kind: AnswerKind) -> Result<GoldAnswer, String> {
    match kind {
        AnswerKind::Numeric => {
            let text = match answer {
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::String(s) => s.trim().to_string(),
                other => return Err(format!("numeric answer must be a number or string, got {other}")),
            };
            let value = Decimal::from_str(&text)
                .map_err(|e| format!("invalid numeric answer {text:?}: {e}"))?;
            Ok(AnswerValue::Numeric(value))
        }
        AnswerKind::Choice => {
            let serde_json::Value::String(s) = answer else {
                return Err(format!("choice answer must be a string, got {answer}"));
            };
            let trimmed = s.trim();
            let mut chars = trimmed.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii_alphabetic() => {
                    Ok(AnswerValue::Choice(c.to_ascii_uppercase()))
                }
                _ => Err(format!("choice answer must be a single letter, got {trimmed:?}")),
            }
        }
        AnswerKind::Free => {
            let serde_json::Value::String(s) = answer else {
                return Err(format!("free answer must be a string, got {answer}"));
            };
            Ok(AnswerValue::Free(s.clone()))
        }
    }
}

// A number with optional sign, currency symbol, digit-group commas, and
// decimal part. Currency and commas are stripped before parsing.
const NUM: &str = r"[-+]?[$€£¥]?(?:\d[\d,]*(?:\.\d+)?|\.\d+)";

static HASH_ANSWER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"####\s*({NUM})")).unwrap());
static ANSWER_IS_NUM_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)\banswer\s+is\s*:?\s*({NUM})")).unwrap());
static NUM_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(NUM).unwrap());

static ANSWER_IS_LETTER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\banswer\s+is\s*:?\s*\(?([A-Za-z])\b\)?").unwrap());
static ANSWER_COLON_LETTER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\banswer\s*:\s*\(?([A-Za-z])\b\)?").unwrap());
static PAREN_LETTER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(([A-Za-z])\)").unwrap());
static FINAL_LETTER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:^|[\s(\[{])([A-Za-z])[)\].!?]*$").unwrap());

fn parse_number(raw: &str) -> Option<Decimal> {
    let cleaned: String = raw
        .chars()
        .filter(|c| !matches!(c, '$' | '€' | '£' | '¥' | ','))
        .collect();
    let cleaned = cleaned.strip_prefix('+').unwrap_or(&cleaned);
    Decimal::from_str(cleaned).ok()
}

/// Extracts a numeric answer from free-form model output.
///
/// Rules in priority order, each last-match-wins:
/// 1. `#### <number>` anywhere in the response;
/// 2. `answer is <number>` (case-insensitive) anywhere;
/// 3. the last number on the final non-empty line.
///
/// Commas and currency symbols are stripped; values parse as exact
/// decimals. Returns `None` when no rule matches.
pub fn extract_numeric(text: &str) -> Option<ExtractedAnswer> {
    for re in [&*HASH_ANSWER_RE, &*ANSWER_IS_NUM_RE] {
        if let Some(caps) = re.captures_iter(text).last() {
            let m = caps.get(1).expect("pattern has one capture group");
            if let Some(value) = parse_number(m.as_str()) {
                return Some(ExtractedAnswer {
                    value: AnswerValue::Numeric(value),
                    source_span: (m.start(), m.end()),
                });
            }
        }
    }
    let (offset, line) = final_non_empty_line(text)?;
    let m = NUM_RE.find_iter(line).last()?;
    let value = parse_number(m.as_str())?;
    Some(ExtractedAnswer {
        value: AnswerValue::Numeric(value),
        source_span: (offset + m.start(), offset + m.end()),
    })
}

fn final_non_empty_line(text: &str) -> Option<(usize, &str)> {
    let mut found = None;
    let mut pos = 0;
    for line in text.split('\n') {
        if !line.trim().is_empty() {
            found = Some((pos, line));
        }
        pos += line.len() + 1;
    }
    found
}

/// Extracts a multiple-choice letter from free-form model output.
///
/// Rules in priority order, each last-match-wins and case-insensitive:
/// 1. `answer is X` (optionally parenthesized);
/// 2. `Answer: X`;
/// 3. a parenthesized standalone letter such as `(b)` anywhere;
/// 4. a bare letter in final standalone position — the last token of the
///    response, trailing punctuation aside.
///
/// Only letters in `alphabet` qualify (compared case-insensitively); the
/// extracted letter is canonicalized to uppercase.
pub fn extract_choice(text: &str, alphabet: &[char]) -> Option<ExtractedAnswer> {
    let in_alphabet = |c: char| {
        let canonical = c.to_ascii_uppercase();
        alphabet.iter().any(|a| a.to_ascii_uppercase() == canonical)
    };
    let scan = |re: &Regex, hay: &str, base: usize| -> Option<ExtractedAnswer> {
        re.captures_iter(hay)
            .filter_map(|caps| {
                let m = caps.get(1).expect("pattern has one capture group");
                let c = m.as_str().chars().next()?;
                in_alphabet(c).then(|| ExtractedAnswer {
                    value: AnswerValue::Choice(c.to_ascii_uppercase()),
                    source_span: (base + m.start(), base + m.end()),
                })
            })
            .last()
    };
    scan(&ANSWER_IS_LETTER_RE, text, 0)
        .or_else(|| scan(&ANSWER_COLON_LETTER_RE, text, 0))
        .or_else(|| scan(&PAREN_LETTER_RE, text, 0))
        .or_else(|| {
            let trimmed = text.trim_end();
            scan(&FINAL_LETTER_RE, trimmed, 0)
        })
}

/// Extracts whatever `kind` calls for. Free-text answers are the whole
/// trimmed response.
pub fn extract_answer(kind: AnswerKind, text: &str) -> Option<ExtractedAnswer> {
    match kind {
        AnswerKind::Numeric => extract_numeric(text),
        AnswerKind::Choice => extract_choice(text, &DEFAULT_CHOICE_ALPHABET),
        AnswerKind::Free => {
            let trimmed = text.trim();
            if trimmed.is_empty() {
                return None;
            }
            let start = text.len() - text.trim_start().len();
            Some(ExtractedAnswer {
                value: AnswerValue::Free(trimmed.to_string()),
                source_span: (start, start + trimmed.len()),
            })
        }
    }
}

fn normalize_free(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Grades an extracted answer against the gold.
///
/// Numeric answers pass within [`NUMERIC_TOLERANCE`]; choice answers must
/// match exactly; free answers match after whitespace/case normalization.
///
/// # Errors
///
/// Returns [`KindMismatch`] when the two values are of different kinds —
/// that is a harness bug, not a wrong answer.
pub fn grade(extracted: &ExtractedAnswer, gold: &GoldAnswer) -> Result<bool, KindMismatch> {
    match (&extracted.value, gold) {
        (AnswerValue::Numeric(a), AnswerValue::Numeric(b)) => {
            Ok((*a - *b).abs() <= NUMERIC_TOLERANCE)
        }
        (AnswerValue::Choice(a), AnswerValue::Choice(b)) => Ok(a == b),
        (AnswerValue::Free(a), AnswerValue::Free(b)) => {
            Ok(normalize_free(a) == normalize_free(b))
        }
        (extracted, gold) => {
            Err(KindMismatch { expected: gold.kind(), got: extracted.kind() })
        }
    }
}

/// Extracts and grades a raw response for a question. Responses that yield
/// no extractable answer grade as incorrect.
pub fn grade_response(question: &Question, response: &str) -> bool {
    match extract_answer(question.kind, response) {
        // Kinds agree by construction: extraction followed question.kind.
        Some(extracted) => grade(&extracted, &question.gold).unwrap_or(false),
        None => false,
    }
}
