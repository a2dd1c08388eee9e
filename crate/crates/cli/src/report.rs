//! The `report` subcommand: re-summarize stored runs from their trace
//! files, optionally merging several into one comparison table.
//!
//! With a dataset, metrics are recomputed from the traces themselves —
//! answers re-graded, tokens and costs re-aggregated from the per-trace
//! ledgers — and the run's report.json / report.csv are regenerated in
//! place, byte-identical when nothing changed. Without a dataset the
//! stored reports are only merged for display.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result, bail};
use cascade_core::bench::{grade_response, load_dataset};
use cascade_core::ledger::{Graded, render_csv, render_table, summarize};
use cascade_core::pipeline::{
    BenchmarkReport, parse_report_json, parse_traces_jsonl, render_report_json,
};
use cascade_core::types::{Question, RoutingTrace};

use crate::config::dir_label;
use crate::run::report_row;

#[derive(Debug, Clone, Default, clap::Args)]
pub struct ReportArgs {
    /// Run directory holding traces.jsonl and report.json; repeat to
    /// merge several runs into one comparison.
    #[arg(long = "run", value_name = "DIR", required = true)]
    pub runs: Vec<PathBuf>,
    /// Question dataset the runs were graded against; enables full
    /// recomputation from traces (and regenerates each run's report
    /// files in place).
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    /// Print the merged rows as JSON instead of an aligned table.
    #[arg(long)]
    pub emit_json: bool,
}

struct StoredRun {
    dir: PathBuf,
    label: String,
    report: BenchmarkReport,
    traces: Vec<RoutingTrace>,
}

fn load_run(dir: &Path) -> Result<StoredRun> {
    let report_path = dir.join("report.json");
    let report = parse_report_json(
        &std::fs::read_to_string(&report_path)
            .with_context(|| format!("reading {}", report_path.display()))?,
    )
    .with_context(|| format!("parsing {}", report_path.display()))?;
    let traces_path = dir.join("traces.jsonl");
    let traces = parse_traces_jsonl(
        &std::fs::read_to_string(&traces_path)
            .with_context(|| format!("reading {}", traces_path.display()))?,
    )
    .with_context(|| format!("parsing {}", traces_path.display()))?;
    Ok(StoredRun { dir: dir.to_path_buf(), label: dir_label(dir), report, traces })
}

/// Rebuilds a run's report from its traces: re-grades every final answer
/// against the dataset and re-aggregates tokens and cost from the stored
/// ledgers. Strategy, model ids, and the failure count carry over from
/// the stored report — traces hold no record of questions that never
/// completed.
fn recompute(run: &StoredRun, questions: &HashMap<&str, &Question>) -> Result<BenchmarkReport> {
    let graded = run
        .traces
        .iter()
        .map(|trace| {
            let question = questions.get(trace.question_id.as_str()).ok_or_else(|| {
                anyhow::anyhow!(
                    "trace {} in {} has no question in the dataset",
                    trace.question_id,
                    run.dir.display()
                )
            })?;
            Ok(Graded { trace, correct: grade_response(question, &trace.final_answer) })
        })
        .collect::<Result<Vec<_>>>()?;
    let row = summarize(&run.label, &graded, run.report.n_failed)
        .map_err(|_| anyhow::anyhow!("{} holds no traces to summarize", run.dir.display()))?;
    Ok(BenchmarkReport {
        accuracy: row.accuracy,
        mean_output_tokens: row.mean_output_tokens,
        mean_input_tokens: row.mean_input_tokens,
        escalation_rate: row.escalation_rate,
        cost_per_100: row.cost_per_100,
        n: row.n,
        n_failed: row.n_failed,
        strategy: run.report.strategy,
        model_ids: run.report.model_ids.clone(),
    })
}

pub fn execute(args: &ReportArgs, output_dir: Option<&Path>, quiet: bool) -> Result<ExitCode> {
    if args.runs.is_empty() {
        bail!("pass at least one --run directory");
    }
    let questions = match &args.dataset {
        Some(path) => Some(
            load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))?,
        ),
        None => None,
    };
    let index: Option<HashMap<&str, &Question>> = questions
        .as_ref()
        .map(|qs| qs.iter().map(|q| (q.id.as_str(), q)).collect());

    let mut rows = Vec::new();
    for dir in &args.runs {
        let run = load_run(dir)?;
        let report = match &index {
            Some(index) => {
                let recomputed = recompute(&run, index)?;
                let row = report_row(&run.label, &recomputed);
                std::fs::write(run.dir.join("report.json"), render_report_json(&recomputed))
                    .with_context(|| format!("rewriting report in {}", run.dir.display()))?;
                std::fs::write(run.dir.join("report.csv"), render_csv(std::slice::from_ref(&row)))
                    .with_context(|| format!("rewriting report in {}", run.dir.display()))?;
                recomputed
            }
            None => run.report,
        };
        rows.push(report_row(&run.label, &report));
    }

    if args.emit_json {
        println!("{}", serde_json::to_string_pretty(&rows).context("rendering JSON")?);
    } else if !quiet {
        print!("{}", render_table(&rows));
    }
    if let Some(dir) = output_dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        std::fs::write(dir.join("comparison.csv"), render_csv(&rows))
            .with_context(|| format!("writing comparison into {}", dir.display()))?;
        std::fs::write(
            dir.join("comparison.json"),
            serde_json::to_string_pretty(&rows).context("rendering JSON")? + "\n",
        )
        .with_context(|| format!("writing comparison into {}", dir.display()))?;
    }
    Ok(if rows.iter().any(|row| row.n_failed > 0) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}
