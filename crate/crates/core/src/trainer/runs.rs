use std::collections::BTreeMap;
use std::thread;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::{run, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::numerics::SeededRng;

/// Multiplier on `n_valid` bounding the number of attempts.
const ATTEMPT_CAP: usize = 5;

/// One seeded experiment, returning its test-split report.
pub trait RunExecutor: Sync {
    fn execute(&self, attempt: usize, seed: u64) -> Result<MetricReport>;
}

/// Runs the full pipeline with `config.seed` replaced by the attempt seed.
pub struct PipelineExecutor<'a> {
    pub config: &'a TrainConfig,
    pub data: &'a Dataset,
}

impl RunExecutor for PipelineExecutor<'_> {
    fn execute(&self, _attempt: usize, seed: u64) -> Result<MetricReport> {
        let config = TrainConfig {
            seed,
            ..self.config.clone()
        };
        Ok(run(&config, self.data)?.result.report)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// 1-based.
    pub attempt: usize,
    pub seed: u64,
    pub valid: bool,
    pub report: Option<MetricReport>,
    /// Runtime failure that made the attempt invalid.
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_valid_requested: usize,
    pub valid_runs: usize,
    pub attempts: usize,
    /// Set when the attempt cap was hit before enough valid runs.
    pub failed: bool,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub runs: Vec<RunRecord>,
}

/// Per-metric mean and population standard deviation.
pub fn summarize(reports: &[MetricReport]) -> BTreeMap<String, MetricSummary> {
    let mut out = BTreeMap::new();
    if reports.is_empty() {
        return out;
    }
    let fields: [(&str, fn(&MetricReport) -> f64); 5] = [
        ("recall", |r| r.recall),
        ("precision", |r| r.precision),
        ("f1", |r| r.f1),
        ("auc_ovr", |r| r.auc_ovr),
        ("map", |r| r.map),
    ];
    let n = reports.len() as f64;
    for (name, get) in fields {
        let mean = reports.iter().map(get).sum::<f64>() / n;
        let var = reports.iter().map(|r| (get(r) - mean).powi(2)).sum::<f64>() / n;
        out.insert(name.to_string(), MetricSummary { mean, sd: var.sqrt() });
    }
    out
}

/// Repeats experiments with fresh seeds drawn from `base_seed` until
/// `n_valid` valid runs are collected or `5 * n_valid` attempts are used.
///
/// Up to `jobs` attempts run concurrently. A wave never launches more
/// attempts than valid runs still needed, so the attempt sequence and the
/// summary are the same for every `jobs`.
pub fn repeated_runs<E: RunExecutor>(executor: &E, n_valid: usize, base_seed: u64, jobs: usize) -> Result<RunSummary> {
    if n_valid == 0 {
        return Err(Error::invalid("n_valid must be at least 1"));
    }
    let cap = ATTEMPT_CAP * n_valid;
    let jobs = jobs.max(1);
    let mut seeds = SeededRng::new(base_seed);
    let mut runs: Vec<RunRecord> = Vec::new();
    let mut valid_reports = Vec::new();

    while valid_reports.len() < n_valid && runs.len() < cap {
        let wave = jobs.min(n_valid - valid_reports.len()).min(cap - runs.len());
        let batch: Vec<(usize, u64)> = (0..wave).map(|i| (runs.len() + i + 1, seeds.next_u64())).collect();
        let results: Vec<Result<MetricReport>> = if wave == 1 {
            vec![executor.execute(batch[0].0, batch[0].1)]
        } else {
            thread::scope(|s| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|&(attempt, seed)| s.spawn(move || executor.execute(attempt, seed)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
            })
        };
        for ((attempt, seed), res) in batch.into_iter().zip(results) {
            let record = match res {
                Ok(report) => {
                    let valid = report.is_valid_run();
                    if valid {
                        valid_reports.push(report.clone());
                    }
                    RunRecord {
                        attempt,
                        seed,
                        valid,
                        report: Some(report),
                        error: None,
                    }
                }
                Err(e) if e.is_usage() => return Err(e),
                Err(e) => {
                    warn!("attempt {attempt} (seed {seed}) failed: {e}");
                    RunRecord {
                        attempt,
                        seed,
                        valid: false,
                        report: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            info!("attempt {attempt} (seed {seed}): {}", if record.valid { "valid" } else { "invalid" });
            runs.push(record);
        }
    }
    let failed = valid_reports.len() < n_valid;
    if failed {
        warn!(
            "only {} of {n_valid} valid runs after {} attempts; summary is partial",
            valid_reports.len(),
            runs.len()
        );
    }
    Ok(RunSummary {
        n_valid_requested: n_valid,
        valid_runs: valid_reports.len(),
        attempts: runs.len(),
        failed,
        metrics: summarize(&valid_reports),
        runs,
    })
}
