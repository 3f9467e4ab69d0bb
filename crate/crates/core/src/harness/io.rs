//! Trace, summary and sweep files.

use std::path::Path;

use serde::Serialize;

use super::pipeline::{Aggregate, PolicyRun};
use super::suite::SweepRow;
use super::PolicyKind;
use crate::domain::{IntervalMetrics, RunSummary};
use crate::error::Result;

/// Column order of `trace.csv`.
pub const TRACE_COLUMNS: [&str; 12] = [
    "t",
    "aec",
    "art",
    "energy_wh",
    "cost_usd",
    "completed_count",
    "violations",
    "mean_accuracy",
    "reward",
    "objective",
    "migrations",
    "wait_queued",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per interval. Accuracy and reward are blank when no task left.
pub fn write_trace(path: impl AsRef<Path>, trace: &[IntervalMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_COLUMNS)?;
    for m in trace {
        let n = m.completed.len();
        let violations = m.completed.iter().filter(|c| c.violated).count();
        let (acc, reward) = if n == 0 {
            (None, None)
        } else {
            let acc = m.completed.iter().map(|c| c.accuracy).sum::<f64>() / n as f64;
            let hits = (n - violations) as f64;
            (Some(acc), Some((hits + acc * n as f64) / (2.0 * n as f64)))
        };
        w.write_record([
            m.t.to_string(),
            m.aec.to_string(),
            m.art.to_string(),
            m.energy_wh.to_string(),
            m.cost_usd.to_string(),
            n.to_string(),
            violations.to_string(),
            fmt_opt(acc),
            fmt_opt(reward),
            m.objective.to_string(),
            m.migrations.to_string(),
            m.wait_queued.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SummaryFile<'a> {
    pub policy: &'a str,
    pub seed: u64,
    pub replications: usize,
    pub mean: &'a std::collections::BTreeMap<String, f64>,
    pub std: &'a std::collections::BTreeMap<String, f64>,
    pub runs: Vec<RunEntry<'a>>,
}

#[derive(Debug, Serialize)]
pub struct RunEntry<'a> {
    pub seed: u64,
    #[serde(flatten)]
    pub summary: &'a RunSummary,
}

/// Deterministic JSON: only simulated quantities, keys in sorted order.
pub fn summary_json(
    policy: PolicyKind,
    base_seed: u64,
    runs: &[&PolicyRun],
    agg: &Aggregate,
) -> Result<String> {
    let file = SummaryFile {
        policy: policy.name(),
        seed: base_seed,
        replications: runs.len(),
        mean: &agg.mean,
        std: &agg.std,
        runs: runs
            .iter()
            .map(|r| RunEntry {
                seed: r.seed,
                summary: &r.summary,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

/// Column order of `sweep.csv`.
pub const SWEEP_COLUMNS: [&str; 14] = [
    "suite",
    "point",
    "value",
    "policy",
    "replications",
    "accuracy",
    "sla_violation_fraction",
    "avg_reward",
    "avg_response_time",
    "total_energy_wh",
    "total_cost_usd",
    "fairness_jain",
    "completed_tasks",
    "error",
];

pub fn write_sweep(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        let get = |k: &str| fmt_opt(r.mean.get(k).copied());
        w.write_record([
            r.suite.clone(),
            r.point.clone(),
            r.value.to_string(),
            r.policy.name().to_string(),
            r.replications.to_string(),
            get("accuracy"),
            get("sla_violation_fraction"),
            get("avg_reward"),
            get("avg_response_time"),
            get("total_energy_wh"),
            get("total_cost_usd"),
            get("fairness_jain"),
            get("completed_tasks"),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
