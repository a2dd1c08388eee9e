//! The `simulate` subcommand: closed-form policy metrics, Monte-Carlo
//! cross-checks, verifier-rate fitting, and one-parameter sweeps — all
//! offline, no model calls.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result, bail};
use cascade_core::sim::{
    MonteCarloReport, PolicyMetrics, PolicyParams, SweepParam, expected_metrics,
    fit_verifier_rates, monte_carlo, render_sweep_csv, sweep,
};
use serde::Serialize;

#[derive(Debug, Clone, Default, clap::Args)]
pub struct SimulateArgs {
    /// Base parameters as a JSON file (same field names as the output's
    /// "params" object; short aliases like "a_s" also parse).
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,

    /// Drafter standalone accuracy.
    #[arg(long = "a-s", value_name = "RATE")]
    pub small_accuracy: Option<f64>,
    /// Large-model standalone accuracy.
    #[arg(long = "a-l", value_name = "RATE")]
    pub large_accuracy: Option<f64>,
    /// Verifier false-pass rate (wrong draft accepted).
    #[arg(long = "v-fp", value_name = "RATE")]
    pub false_pass_rate: Option<f64>,
    /// Verifier false-fail rate (correct draft rejected).
    #[arg(long = "v-fn", value_name = "RATE")]
    pub false_fail_rate: Option<f64>,
    /// Mean draft output tokens.
    #[arg(long = "t-s", value_name = "TOKENS")]
    pub draft_tokens: Option<f64>,
    /// Mean verification output tokens.
    #[arg(long = "t-v", value_name = "TOKENS")]
    pub verify_tokens: Option<f64>,
    /// Mean escalation output tokens.
    #[arg(long = "t-l", value_name = "TOKENS")]
    pub escalate_tokens: Option<f64>,
    /// Drafter price, USD per million output tokens.
    #[arg(long = "p-s", value_name = "USD")]
    pub small_price: Option<f64>,
    /// Large-model price, USD per million output tokens.
    #[arg(long = "p-l", value_name = "USD")]
    pub large_price: Option<f64>,

    /// Cross-check the closed form with this many sampled trials.
    #[arg(long, value_name = "TRIALS")]
    pub mc: Option<u64>,
    /// Seed for the sampled trials (same seed, same estimate).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Search for verifier rates that produce this cascade accuracy.
    #[arg(long, value_name = "ACCURACY")]
    pub fit_target: Option<f64>,
    /// Grid step for the rate search.
    #[arg(long, default_value_t = 1e-3, value_name = "STEP")]
    pub fit_resolution: f64,

    /// Sweep one parameter and print CSV (a_s, a_l, v_fp, v_fn, t_s,
    /// t_v, t_l, p_s, p_l, or their long names).
    #[arg(long, value_name = "PARAM")]
    pub sweep: Option<SweepParam>,
    /// Low end of the sweep.
    #[arg(long, value_name = "VALUE")]
    pub from: Option<f64>,
    /// High end of the sweep.
    #[arg(long, value_name = "VALUE")]
    pub to: Option<f64>,
    /// Points along the sweep, endpoints included.
    #[arg(long, default_value_t = 11, value_name = "N")]
    pub steps: u32,
}

/// What the default `simulate` invocation prints.
#[derive(Debug, Serialize)]
struct MetricRecord {
    params: PolicyParams,
    metrics: PolicyMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<MonteCarloReport>,
}

fn merged_params(args: &SimulateArgs) -> Result<PolicyParams> {
    let mut params = match &args.params {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading parameter file {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing parameter file {}", path.display()))?
        }
        None => PolicyParams::default(),
    };
    let overrides = [
        (&mut params.small_accuracy, args.small_accuracy),
        (&mut params.large_accuracy, args.large_accuracy),
        (&mut params.false_pass_rate, args.false_pass_rate),
        (&mut params.false_fail_rate, args.false_fail_rate),
        (&mut params.draft_tokens, args.draft_tokens),
        (&mut params.verify_tokens, args.verify_tokens),
        (&mut params.escalate_tokens, args.escalate_tokens),
        (&mut params.small_price_per_million, args.small_price),
        (&mut params.large_price_per_million, args.large_price),
    ];
    for (slot, value) in overrides {
        if let Some(value) = value {
            *slot = value;
        }
    }
    params.validate().map_err(|err| anyhow::anyhow!(err))?;
    Ok(params)
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value).context("rendering JSON")?);
    Ok(())
}

pub fn execute(args: &SimulateArgs) -> Result<ExitCode> {
    let params = merged_params(args)?;

    if let Some(param) = args.sweep {
        let (Some(from), Some(to)) = (args.from, args.to) else {
            bail!("--sweep needs both --from and --to");
        };
        let rows = sweep(&params, param, from, to, args.steps)
            .map_err(|err| anyhow::anyhow!(err))?;
        print!("{}", render_sweep_csv(param, &rows));
        return Ok(ExitCode::SUCCESS);
    }

    if let Some(target) = args.fit_target {
        let fit = fit_verifier_rates(
            params.small_accuracy,
            params.large_accuracy,
            target,
            args.fit_resolution,
        )
        .map_err(|err| anyhow::anyhow!(err))?;
        print_json(&fit)?;
        return Ok(ExitCode::SUCCESS);
    }

    let record = MetricRecord {
        metrics: expected_metrics(&params).map_err(|err| anyhow::anyhow!(err))?,
        monte_carlo: match args.mc {
            Some(trials) => {
                Some(monte_carlo(&params, trials, args.seed).map_err(|err| anyhow::anyhow!(err))?)
            }
            None => None,
        },
        params,
    };
    print_json(&record)?;
    Ok(ExitCode::SUCCESS)
}
