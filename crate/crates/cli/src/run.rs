//! The `run` subcommand: execute the draft/verify/escalate cascade over a
//! dataset and write the run artifacts (traces.jsonl, report.json,
//! report.csv).

use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result, bail};
use async_trait::async_trait;
use cascade_core::bench::load_dataset;
use cascade_core::ledger::{ReportRow, render_csv, render_table};
use cascade_core::pipeline::{
    BenchmarkReport, PipelineConfig, PipelineError, RoleBinding, render_report_json,
    render_traces_jsonl, run_benchmark,
};
use cascade_core::provider::{
    CachedProvider, Completion, CompletionRequest, HttpProvider, Provider, ProviderError,
    ResponseCache,
};

use crate::config::{ResolvedRun, ResolvedTier, dir_label};

/// Stand-in for a tier with no live endpoint. Legal only in replay runs;
/// any call that actually reaches it means the cache had a miss, and it
/// fails the question rather than inventing a completion.
struct ReplayOnlyProvider {
    id: &'static str,
}

#[async_trait]
impl Provider for ReplayOnlyProvider {
    fn id(&self) -> &str {
        self.id
    }

    async fn complete(&self, _request: &CompletionRequest) -> Result<Completion, ProviderError> {
        Err(ProviderError::Transport {
            attempts: 0,
            detail: format!("tier '{}' has no live endpoint (replay-only run)", self.id),
        })
    }
}

/// Builds one tier's provider: HTTP when an endpoint is configured,
/// replay-only otherwise, wrapped in the shared cache when one is open.
///
/// The provider id is the tier name ("small" / "large"), deliberately
/// stable across processes: it feeds the cache key, so a recorded cache
/// replays regardless of endpoint or path changes.
fn build_provider(
    tier: &ResolvedTier,
    id: &'static str,
    cache: Option<&Arc<ResponseCache>>,
) -> Arc<dyn Provider> {
    let inner: Arc<dyn Provider> = match &tier.base_url {
        Some(url) => {
            let mut http = HttpProvider::new(id, url.clone());
            if let Some(key) = &tier.api_key {
                http = http.with_api_key(key.clone());
            }
            if let Some(secs) = tier.timeout_secs {
                http = http.with_timeout(Duration::from_secs(secs));
            }
            if let Some(cap) = tier.max_in_flight {
                http = http.with_max_in_flight(cap);
            }
            Arc::new(http)
        }
        None => Arc::new(ReplayOnlyProvider { id }),
    };
    match cache {
        Some(cache) => Arc::new(CachedProvider::new(cache.clone(), inner)),
        None => inner,
    }
}

fn bind_role(
    tier: &ResolvedTier,
    provider: Arc<dyn Provider>,
    defaults: fn(Arc<dyn Provider>, String) -> RoleBinding,
) -> RoleBinding {
    let mut binding = defaults(provider, tier.model_id.clone());
    if let Some(t) = tier.temperature {
        binding.temperature = t;
    }
    if let Some(cap) = tier.max_output_tokens {
        binding.max_output_tokens = cap;
    }
    if let Some(flag) = tier.reasoning_enabled {
        binding.reasoning_enabled = flag;
    }
    binding
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))
}

/// Report row for a run directory: recomputed metrics labeled by the
/// directory name.
pub fn report_row(label: &str, report: &BenchmarkReport) -> ReportRow {
    ReportRow {
        label: label.to_string(),
        accuracy: report.accuracy,
        mean_output_tokens: report.mean_output_tokens,
        mean_input_tokens: report.mean_input_tokens,
        escalation_rate: report.escalation_rate,
        cost_per_100: report.cost_per_100,
        n: report.n,
        n_failed: report.n_failed,
    }
}

pub fn execute(resolved: &ResolvedRun, quiet: bool) -> Result<ExitCode> {
    let questions = load_dataset(&resolved.dataset)
        .with_context(|| format!("loading dataset {}", resolved.dataset.display()))?;

    let cache = match &resolved.cache_path {
        Some(path) => Some(Arc::new(
            ResponseCache::open(path, resolved.cache_mode)
                .with_context(|| format!("opening cache {}", path.display()))?,
        )),
        None => None,
    };
    let small = build_provider(&resolved.small, "small", cache.as_ref());
    let large = build_provider(&resolved.large, "large", cache.as_ref());

    let mut config = PipelineConfig::new(
        bind_role(&resolved.small, small, |p, m| RoleBinding::small(p, m)),
        bind_role(&resolved.large, large, |p, m| RoleBinding::large(p, m)),
    );
    config.judge.strategy = resolved.strategy;
    config.judge.augment_escalation = resolved.augment_escalation;
    config.judge_temperature = resolved.judge_temperature;
    config.prices = resolved.prices.clone();
    config.parallelism = resolved.parallelism;

    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    let output = match runtime.block_on(run_benchmark(&config, &questions)) {
        Ok(output) => output,
        Err(PipelineError::EmptyDataset) => {
            bail!("dataset {} holds no questions", resolved.dataset.display())
        }
        Err(PipelineError::NoCompletedQuestions { n_failed }) => {
            eprintln!("run failed: all {n_failed} question(s) errored before completing");
            return Ok(ExitCode::from(1));
        }
    };

    std::fs::create_dir_all(&resolved.output_dir)
        .with_context(|| format!("creating output directory {}", resolved.output_dir.display()))?;
    let label = dir_label(&resolved.output_dir);
    let row = report_row(&label, &output.report);
    write_artifact(&resolved.output_dir, "traces.jsonl", &render_traces_jsonl(&output.traces))?;
    write_artifact(&resolved.output_dir, "report.json", &render_report_json(&output.report))?;
    write_artifact(&resolved.output_dir, "report.csv", &render_csv(std::slice::from_ref(&row)))?;

    for failure in &output.failures {
        eprintln!(
            "question {} failed at {:?}: {}",
            failure.question_id, failure.stage, failure.error
        );
    }
    if !quiet {
        print!("{}", render_table(std::slice::from_ref(&row)));
        println!("artifacts: {}", resolved.output_dir.display());
    }
    Ok(if output.report.n_failed > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
}
