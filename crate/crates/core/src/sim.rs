//! Offline policy simulator: predict accuracy, escalation rate, token
//! spend, and cost for a draft/verify/escalate policy without calling any
//! model.
//!
//! The policy is described by seven numbers — the small model's accuracy,
//! the large model's accuracy, the verifier's false-pass and false-fail
//! rates, and mean output tokens for draft, verify, and escalation — plus
//! output prices for the two models. Three evaluators are provided and
//! deliberately share no arithmetic:
//!
//! * [`expected_metrics`] — closed form.
//! * [`enumerate_outcomes`] — sums the eight (small correct?, verifier
//!   passes?, large correct?) leaves of the outcome tree.
//! * [`monte_carlo`] — seeded sampling with standard errors.
//!
//! Token and price inputs are `f64` means: this module is a planning
//! tool, not an accounting ledger. Simulated costs cover output tokens
//! only; draft tokens are priced at the small model's rate, verify and
//! escalation tokens at the large model's rate, matching how the live
//! pipeline assigns roles to models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default output price for the small tier, USD per million tokens.
/// Kept in sync with the ledger's built-in price table by a unit test.
pub const DEFAULT_SMALL_PRICE_PER_MILLION: f64 = 0.121;
/// Default output price for the large tier, USD per million tokens.
pub const DEFAULT_LARGE_PRICE_PER_MILLION: f64 = 10.0;

/// Policy description. Field names are descriptive; the short aliases
/// (`a_s`, `a_l`, `v_fp`, `v_fn`, `t_s`, `t_v`, `t_l`, `p_s`, `p_l`) are
/// accepted when deserializing so hand-written JSON stays terse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyParams {
    /// Probability the small model's draft answer is correct.
    #[serde(alias = "a_s")]
    pub small_accuracy: f64,
    /// Probability the large model's answer is correct when asked directly.
    #[serde(alias = "a_l")]
    pub large_accuracy: f64,
    /// Probability the verifier passes a wrong draft.
    #[serde(alias = "v_fp")]
    pub false_pass_rate: f64,
    /// Probability the verifier fails a correct draft.
    #[serde(alias = "v_fn")]
    pub false_fail_rate: f64,
    /// Mean output tokens of a draft call.
    #[serde(alias = "t_s")]
    pub draft_tokens: f64,
    /// Mean output tokens of a verification call.
    #[serde(alias = "t_v")]
    pub verify_tokens: f64,
    /// Mean output tokens of an escalation call.
    #[serde(alias = "t_l")]
    pub escalate_tokens: f64,
    /// Small-tier output price, USD per million tokens.
    #[serde(alias = "p_s")]
    pub small_price_per_million: f64,
    /// Large-tier output price, USD per million tokens.
    #[serde(alias = "p_l")]
    pub large_price_per_million: f64,
}

impl Default for PolicyParams {
    /// Illustrative defaults for a 3B-drafter / frontier-verifier pairing;
    /// override per run.
    fn default() -> Self {
        PolicyParams {
            small_accuracy: 0.853,
            large_accuracy: 0.964,
            false_pass_rate: 0.05,
            false_fail_rate: 0.10,
            draft_tokens: 330.0,
            verify_tokens: 25.0,
            escalate_tokens: 1804.0,
            small_price_per_million: DEFAULT_SMALL_PRICE_PER_MILLION,
            large_price_per_million: DEFAULT_LARGE_PRICE_PER_MILLION,
        }
    }
}

/// A parameter outside its legal range.
#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("{name} = {value} is out of range (expected {expected})")]
    OutOfRange { name: &'static str, value: f64, expected: &'static str },
    #[error("trial count must be at least 1")]
    NoTrials,
}

impl PolicyParams {
    /// Checks every field: rates in [0, 1], tokens and prices finite and
    /// non-negative.
    pub fn validate(&self) -> Result<(), ParamError> {
        let rate = |name: &'static str, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(ParamError::OutOfRange { name, value, expected: "0 to 1" })
            }
        };
        let non_negative = |name: &'static str, value: f64| {
            if value.is_finite() && value >= 0.0 {
                Ok(())
            } else {
                Err(ParamError::OutOfRange { name, value, expected: "a finite value >= 0" })
            }
        };
        rate("small_accuracy", self.small_accuracy)?;
        rate("large_accuracy", self.large_accuracy)?;
        rate("false_pass_rate", self.false_pass_rate)?;
        rate("false_fail_rate", self.false_fail_rate)?;
        non_negative("draft_tokens", self.draft_tokens)?;
        non_negative("verify_tokens", self.verify_tokens)?;
        non_negative("escalate_tokens", self.escalate_tokens)?;
        non_negative("small_price_per_million", self.small_price_per_million)?;
        non_negative("large_price_per_million", self.large_price_per_million)?;
        Ok(())
    }

    fn cost_per_100(&self, mean_small_tokens: f64, mean_large_tokens: f64) -> f64 {
        let per_question = (mean_small_tokens * self.small_price_per_million
            + mean_large_tokens * self.large_price_per_million)
            / 1_000_000.0;
        per_question * 100.0
    }
}

/// Predicted per-question metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    /// Probability the final answer is correct.
    pub accuracy: f64,
    /// Probability a question escalates to the large model.
    pub escalation_rate: f64,
    /// Mean output tokens per question across all calls.
    pub mean_output_tokens: f64,
    /// USD per 100 questions, output tokens only.
    pub cost_per_100: f64,
}

/// Closed-form prediction.
///
/// Escalation happens when the verifier fails the draft: a correct draft
/// is failed with the false-fail rate, a wrong draft is (correctly)
/// failed with one minus the false-pass rate.
///
/// # Errors
///
/// [`ParamError`] when any parameter is out of range.
pub fn expected_metrics(params: &PolicyParams) -> Result<PolicyMetrics, ParamError> {
    params.validate()?;
    let escalation_rate = params.small_accuracy * params.false_fail_rate
        + (1.0 - params.small_accuracy) * (1.0 - params.false_pass_rate);
    let accuracy = params.small_accuracy * (1.0 - params.false_fail_rate)
        + escalation_rate * params.large_accuracy;
    let mean_output_tokens =
        params.draft_tokens + params.verify_tokens + escalation_rate * params.escalate_tokens;
    let cost_per_100 = params.cost_per_100(
        params.draft_tokens,
        params.verify_tokens + escalation_rate * params.escalate_tokens,
    );
    Ok(PolicyMetrics { accuracy, escalation_rate, mean_output_tokens, cost_per_100 })
}

/// Exhaustive prediction: walks all eight combinations of (draft correct,
/// verifier passes, large correct), weighting each leaf by its
/// probability. Kept free of the closed form's algebra so the two can
/// check each other.
///
/// # Errors
///
/// [`ParamError`] when any parameter is out of range.
pub fn enumerate_outcomes(params: &PolicyParams) -> Result<PolicyMetrics, ParamError> {
    params.validate()?;
    let mut accuracy = 0.0;
    let mut escalation_rate = 0.0;
    let mut mean_output_tokens = 0.0;
    let mut mean_small_tokens = 0.0;
    let mut mean_large_tokens = 0.0;
    for draft_correct in [true, false] {
        for verifier_passes in [true, false] {
            for large_correct in [true, false] {
                let p_draft = if draft_correct {
                    params.small_accuracy
                } else {
                    1.0 - params.small_accuracy
                };
                let p_pass = match (draft_correct, verifier_passes) {
                    (true, true) => 1.0 - params.false_fail_rate,
                    (true, false) => params.false_fail_rate,
                    (false, true) => params.false_pass_rate,
                    (false, false) => 1.0 - params.false_pass_rate,
                };
                let p_large = if large_correct {
                    params.large_accuracy
                } else {
                    1.0 - params.large_accuracy
                };
                let weight = p_draft * p_pass * p_large;
                let final_correct = if verifier_passes { draft_correct } else { large_correct };
                let escalated = !verifier_passes;
                let large_tokens = params.verify_tokens
                    + if escalated { params.escalate_tokens } else { 0.0 };
                if final_correct {
                    accuracy += weight;
                }
                if escalated {
                    escalation_rate += weight;
                }
                mean_small_tokens += weight * params.draft_tokens;
                mean_large_tokens += weight * large_tokens;
                mean_output_tokens += weight * (params.draft_tokens + large_tokens);
            }
        }
    }
    let cost_per_100 = params.cost_per_100(mean_small_tokens, mean_large_tokens);
    Ok(PolicyMetrics { accuracy, escalation_rate, mean_output_tokens, cost_per_100 })
}

/// Monte-Carlo estimate with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub mean: PolicyMetrics,
    /// Standard error of each estimate: binomial for the two rates,
    /// sample-SD-over-root-n for tokens and cost.
    pub stderr: PolicyMetrics,
    pub trials: u64,
}

/// Samples `trials` independent questions with a seeded generator. The
/// same seed always yields the same report.
///
/// # Errors
///
/// [`ParamError`] when a parameter is out of range or `trials` is zero.
pub fn monte_carlo(
    params: &PolicyParams,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloReport, ParamError> {
    params.validate()?;
    if trials == 0 {
        return Err(ParamError::NoTrials);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut correct: u64 = 0;
    let mut escalated: u64 = 0;
    let mut tokens_sum = 0.0;
    let mut tokens_sumsq = 0.0;
    let mut cost_sum = 0.0;
    let mut cost_sumsq = 0.0;
    for _ in 0..trials {
        let draft_correct = rng.random::<f64>() < params.small_accuracy;
        let pass_probability = if draft_correct {
            1.0 - params.false_fail_rate
        } else {
            params.false_pass_rate
        };
        let passes = rng.random::<f64>() < pass_probability;
        let (is_correct, escalates) = if passes {
            (draft_correct, false)
        } else {
            (rng.random::<f64>() < params.large_accuracy, true)
        };
        if is_correct {
            correct += 1;
        }
        if escalates {
            escalated += 1;
        }
        let large_tokens =
            params.verify_tokens + if escalates { params.escalate_tokens } else { 0.0 };
        let tokens = params.draft_tokens + large_tokens;
        let cost = params.cost_per_100(params.draft_tokens, large_tokens);
        tokens_sum += tokens;
        tokens_sumsq += tokens * tokens;
        cost_sum += cost;
        cost_sumsq += cost * cost;
    }
    let n = trials as f64;
    let accuracy = correct as f64 / n;
    let escalation_rate = escalated as f64 / n;
    let mean_tokens = tokens_sum / n;
    let mean_cost = cost_sum / n;
    let proportion_se = |p: f64| (p * (1.0 - p) / n).sqrt();
    let sample_se = |sum: f64, sumsq: f64, mean: f64| {
        if trials < 2 {
            return 0.0;
        }
        let variance = ((sumsq - sum * mean).max(0.0)) / (n - 1.0);
        (variance / n).sqrt()
    };
    Ok(MonteCarloReport {
        mean: PolicyMetrics {
            accuracy,
            escalation_rate,
            mean_output_tokens: mean_tokens,
            cost_per_100: mean_cost,
        },
        stderr: PolicyMetrics {
            accuracy: proportion_se(accuracy),
            escalation_rate: proportion_se(escalation_rate),
            mean_output_tokens: sample_se(tokens_sum, tokens_sumsq, mean_tokens),
            cost_per_100: sample_se(cost_sum, cost_sumsq, mean_cost),
        },
        trials,
    })
}

/// The accuracy ceiling of the cascade: every wrong draft caught and
/// every escalation answered at the large model's accuracy. No verifier
/// can beat `a_small + (1 - a_small) * a_large`.
pub fn accuracy_upper_bound(small_accuracy: f64, large_accuracy: f64) -> f64 {
    small_accuracy + (1.0 - small_accuracy) * large_accuracy
}

/// Verifier operating point found by [`fit_verifier_rates`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifierFit {
    pub false_pass_rate: f64,
    pub false_fail_rate: f64,
    /// Accuracy the fitted rates achieve.
    pub accuracy: f64,
    pub escalation_rate: f64,
}

/// The requested accuracy exceeds the cascade's ceiling.
#[derive(Debug, Error, PartialEq)]
#[error("target accuracy {target} exceeds the attainable bound {bound}")]
pub struct TargetAboveBound {
    pub target: f64,
    pub bound: f64,
}

/// Searches a `resolution`-spaced grid of (false-pass, false-fail) rates
/// for the point whose predicted accuracy is closest to `target`,
/// breaking ties toward the lowest escalation rate (cheapest verifier).
/// With `resolution` 1e-3 the achieved accuracy lands within a few 1e-4
/// of any feasible target.
///
/// # Errors
///
/// [`TargetAboveBound`] when no verifier could reach the target.
pub fn fit_verifier_rates(
    small_accuracy: f64,
    large_accuracy: f64,
    target: f64,
    resolution: f64,
) -> Result<VerifierFit, TargetAboveBound> {
    let bound = accuracy_upper_bound(small_accuracy, large_accuracy);
    if target > bound {
        return Err(TargetAboveBound { target, bound });
    }
    let resolution = resolution.clamp(1e-6, 1.0);
    let steps = (1.0 / resolution).round() as u64;
    let mut best: Option<VerifierFit> = None;
    for fp_step in 0..=steps {
        let false_pass_rate = fp_step as f64 * resolution;
        for fn_step in 0..=steps {
            let false_fail_rate = fn_step as f64 * resolution;
            let escalation_rate = small_accuracy * false_fail_rate
                + (1.0 - small_accuracy) * (1.0 - false_pass_rate);
            let accuracy = small_accuracy * (1.0 - false_fail_rate)
                + escalation_rate * large_accuracy;
            let candidate =
                VerifierFit { false_pass_rate, false_fail_rate, accuracy, escalation_rate };
            let better = match &best {
                None => true,
                Some(current) => {
                    let d_new = (accuracy - target).abs();
                    let d_old = (current.accuracy - target).abs();
                    d_new < d_old
                        || (d_new == d_old && escalation_rate < current.escalation_rate)
                }
            };
            if better {
                best = Some(candidate);
            }
        }
    }
    Ok(best.expect("grid is never empty"))
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    SmallAccuracy,
    LargeAccuracy,
    FalsePassRate,
    FalseFailRate,
    DraftTokens,
    VerifyTokens,
    EscalateTokens,
    SmallPrice,
    LargePrice,
}

impl SweepParam {
    /// Short name used in sweep CSV headers and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::SmallAccuracy => "a_s",
            SweepParam::LargeAccuracy => "a_l",
            SweepParam::FalsePassRate => "v_fp",
            SweepParam::FalseFailRate => "v_fn",
            SweepParam::DraftTokens => "t_s",
            SweepParam::VerifyTokens => "t_v",
            SweepParam::EscalateTokens => "t_l",
            SweepParam::SmallPrice => "p_s",
            SweepParam::LargePrice => "p_l",
        }
    }

    fn apply(self, params: &mut PolicyParams, value: f64) {
        match self {
            SweepParam::SmallAccuracy => params.small_accuracy = value,
            SweepParam::LargeAccuracy => params.large_accuracy = value,
            SweepParam::FalsePassRate => params.false_pass_rate = value,
            SweepParam::FalseFailRate => params.false_fail_rate = value,
            SweepParam::DraftTokens => params.draft_tokens = value,
            SweepParam::VerifyTokens => params.verify_tokens = value,
            SweepParam::EscalateTokens => params.escalate_tokens = value,
            SweepParam::SmallPrice => params.small_price_per_million = value,
            SweepParam::LargePrice => params.large_price_per_million = value,
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a_s" | "small_accuracy" => Ok(SweepParam::SmallAccuracy),
            "a_l" | "large_accuracy" => Ok(SweepParam::LargeAccuracy),
            "v_fp" | "false_pass_rate" => Ok(SweepParam::FalsePassRate),
            "v_fn" | "false_fail_rate" => Ok(SweepParam::FalseFailRate),
            "t_s" | "draft_tokens" => Ok(SweepParam::DraftTokens),
            "t_v" | "verify_tokens" => Ok(SweepParam::VerifyTokens),
            "t_l" | "escalate_tokens" => Ok(SweepParam::EscalateTokens),
            "p_s" | "small_price_per_million" => Ok(SweepParam::SmallPrice),
            "p_l" | "large_price_per_million" => Ok(SweepParam::LargePrice),
            other => Err(format!(
                "unknown sweep parameter {other:?} (expected one of a_s, a_l, v_fp, v_fn, \
                 t_s, t_v, t_l, p_s, p_l or their long names)"
            )),
        }
    }
}

/// Evaluates the closed form along `steps` evenly spaced values of one
/// parameter, endpoints inclusive.
///
/// # Errors
///
/// [`ParamError`] when a swept value (or any base parameter) is out of
/// range.
pub fn sweep(
    base: &PolicyParams,
    param: SweepParam,
    from: f64,
    to: f64,
    steps: u32,
) -> Result<Vec<(f64, PolicyMetrics)>, ParamError> {
    let steps = steps.max(2);
    let mut rows = Vec::with_capacity(steps as usize);
    for i in 0..steps {
        let fraction = f64::from(i) / f64::from(steps - 1);
        let value = from + (to - from) * fraction;
        let mut params = *base;
        param.apply(&mut params, value);
        rows.push((value, expected_metrics(&params)?));
    }
    Ok(rows)
}

/// Renders sweep rows as CSV with the swept parameter's short name as the
/// first column header.
pub fn render_sweep_csv(param: SweepParam, rows: &[(f64, PolicyMetrics)]) -> String {
    let mut out = format!("{},accuracy,escalation_rate,mean_output_tokens,cost_per_100\n",
        param.name());
    for (value, m) in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            value, m.accuracy, m.escalation_rate, m.mean_output_tokens, m.cost_per_100
        ));
    }
    out
}
