use std::io::Write;
use std::thread;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::{prepare, train, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{objective_score, MetricReport};
use crate::numerics::SeededRng;

/// Evenly spaced grid `lo, lo + step, ...` not exceeding `hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl StepRange {
    pub const fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self { lo, hi, step }
    }

    fn points(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    /// Values are rounded to 10 decimals so grid points print cleanly.
    pub fn sample(&self, rng: &mut SeededRng) -> f64 {
        let v = self.lo + self.step * rng.below(self.points()) as f64;
        (v * 1e10).round() / 1e10
    }

    pub fn contains(&self, v: f64) -> bool {
        let k = (v - self.lo) / self.step;
        v >= self.lo - 1e-9 && v <= self.hi + 1e-9 && (k - k.round()).abs() < 1e-6
    }
}

/// Log-uniform over `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRange {
    pub lo: f64,
    pub hi: f64,
}

impl LogRange {
    pub fn sample(&self, rng: &mut SeededRng) -> f64 {
        rng.uniform_range(self.lo.ln(), self.hi.ln()).exp().clamp(self.lo, self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntRange {
    pub lo: usize,
    pub hi: usize,
}

impl IntRange {
    pub fn sample(&self, rng: &mut SeededRng) -> usize {
        self.lo + rng.below(self.hi - self.lo + 1)
    }

    pub fn contains(&self, v: usize) -> bool {
        (self.lo..=self.hi).contains(&v)
    }
}

/// Random-search ranges. The default is the reference search space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub hidden_size: Vec<usize>,
    pub dropout: StepRange,
    pub learning_rate: LogRange,
    pub weight_decay: LogRange,
    pub num_clusters: IntRange,
    pub cluster_loss_weight: StepRange,
    pub dist_loss_weight: StepRange,
    pub modal_temperature: StepRange,
    pub numeric_feature_temperature: StepRange,
    pub text_feature_temperature: StepRange,
    pub patience: IntRange,
    pub batch_size: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            hidden_size: vec![256, 512, 768, 1024],
            dropout: StepRange::new(0.1, 0.7, 0.1),
            learning_rate: LogRange { lo: 1e-5, hi: 1e-2 },
            weight_decay: LogRange { lo: 1e-6, hi: 1e-3 },
            num_clusters: IntRange { lo: 2, hi: 8 },
            cluster_loss_weight: StepRange::new(0.0005, 0.005, 0.0005),
            dist_loss_weight: StepRange::new(0.02, 0.08, 0.005),
            modal_temperature: StepRange::new(1.0, 3.0, 0.1),
            numeric_feature_temperature: StepRange::new(0.5, 0.99, 0.05),
            text_feature_temperature: StepRange::new(0.5, 0.99, 0.05),
            patience: IntRange { lo: 5, hi: 20 },
            batch_size: vec![8, 16, 32],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size.is_empty() || self.batch_size.is_empty() {
            return Err(Error::invalid("search space choice lists must be non-empty"));
        }
        if self.hidden_size.contains(&0) || self.batch_size.contains(&0) {
            return Err(Error::invalid("search space sizes must be positive"));
        }
        let steps = [
            self.dropout,
            self.cluster_loss_weight,
            self.dist_loss_weight,
            self.modal_temperature,
            self.numeric_feature_temperature,
            self.text_feature_temperature,
        ];
        if steps.iter().any(|s| !(s.step > 0.0 && s.lo <= s.hi && s.lo.is_finite() && s.hi.is_finite())) {
            return Err(Error::invalid("stepped ranges need lo <= hi and a positive step"));
        }
        for r in [self.learning_rate, self.weight_decay] {
            if !(r.lo > 0.0 && r.lo <= r.hi && r.hi.is_finite()) {
                return Err(Error::invalid("log-uniform ranges need 0 < lo <= hi"));
            }
        }
        if self.num_clusters.lo == 0 || self.num_clusters.lo > self.num_clusters.hi || self.patience.lo > self.patience.hi {
            return Err(Error::invalid("integer ranges need lo <= hi (and at least one cluster)"));
        }
        Ok(())
    }

    /// Draws every searched field; the rest is copied from `base`.
    pub fn sample(&self, base: &TrainConfig, rng: &mut SeededRng) -> TrainConfig {
        TrainConfig {
            hidden_size: self.hidden_size[rng.below(self.hidden_size.len())],
            dropout: self.dropout.sample(rng),
            learning_rate: self.learning_rate.sample(rng),
            weight_decay: self.weight_decay.sample(rng),
            num_clusters: self.num_clusters.sample(rng),
            cluster_loss_weight: self.cluster_loss_weight.sample(rng),
            dist_loss_weight: self.dist_loss_weight.sample(rng),
            modal_temperature: self.modal_temperature.sample(rng),
            numeric_feature_temperature: self.numeric_feature_temperature.sample(rng),
            text_feature_temperature: self.text_feature_temperature.sample(rng),
            patience: self.patience.sample(rng),
            batch_size: self.batch_size[rng.below(self.batch_size.len())],
            ..base.clone()
        }
    }

    pub fn contains(&self, c: &TrainConfig) -> bool {
        self.hidden_size.contains(&c.hidden_size)
            && self.dropout.contains(c.dropout)
            && self.learning_rate.contains(c.learning_rate)
            && self.weight_decay.contains(c.weight_decay)
            && self.num_clusters.contains(c.num_clusters)
            && self.cluster_loss_weight.contains(c.cluster_loss_weight)
            && self.dist_loss_weight.contains(c.dist_loss_weight)
            && self.modal_temperature.contains(c.modal_temperature)
            && self.numeric_feature_temperature.contains(c.numeric_feature_temperature)
            && self.text_feature_temperature.contains(c.text_feature_temperature)
            && self.patience.contains(c.patience)
            && self.batch_size.contains(&c.batch_size)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub objective: f64,
    pub valid: bool,
    pub epochs: usize,
}

/// Trains and scores one sampled configuration.
pub trait TrialRunner: Sync {
    fn run_trial(&self, trial: usize, config: &TrainConfig) -> Result<TrialOutcome>;
}

/// Scores each trial on the validation split, leaving the test split
/// untouched by model selection.
pub struct PipelineTrialRunner<'a> {
    pub data: &'a Dataset,
}

impl TrialRunner for PipelineTrialRunner<'_> {
    fn run_trial(&self, _trial: usize, config: &TrainConfig) -> Result<TrialOutcome> {
        let prepared = prepare(config, self.data)?;
        let outcome = train(config, &prepared.train, &prepared.val)?;
        let p = outcome.model.predict(&prepared.val, config.eval_batch_size)?;
        let report = MetricReport::from_probs(&p.probs, &p.labels)?;
        Ok(TrialOutcome {
            objective: objective_score(&report),
            valid: report.is_valid_run(),
            epochs: outcome.epochs_run,
        })
    }
}

/// One line of the trial log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// 1-based.
    pub trial: usize,
    pub config: TrainConfig,
    pub objective: f64,
    pub valid: bool,
    pub epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: TrainConfig,
    pub best_trial: usize,
    pub best_objective: f64,
    /// False when no trial predicted all three classes and the best was
    /// chosen by penalized score.
    pub best_valid: bool,
    pub trials: Vec<TrialRecord>,
}

/// Random search over `space`. All configurations are drawn from `seed`
/// before any training, each trial trains with `base.seed`, and up to
/// `jobs` trials run at once. Records go to `log` as JSON lines in trial
/// order. The highest objective among valid trials wins, earliest trial on
/// ties.
pub fn tune<R: TrialRunner>(
    space: &SearchSpace,
    budget: usize,
    base: &TrainConfig,
    runner: &R,
    seed: u64,
    jobs: usize,
    mut log: Option<&mut dyn Write>,
) -> Result<TuneResult> {
    if budget == 0 {
        return Err(Error::invalid("tuning budget must be at least 1"));
    }
    space.validate()?;
    base.validate()?;
    let mut rng = SeededRng::new(seed);
    let configs: Vec<TrainConfig> = (0..budget).map(|_| space.sample(base, &mut rng)).collect();
    let mut trials: Vec<TrialRecord> = Vec::with_capacity(budget);

    for wave in configs.chunks(jobs.max(1)) {
        let offset = trials.len();
        let results: Vec<Result<TrialOutcome>> = thread::scope(|s| {
            let handles: Vec<_> = wave
                .iter()
                .enumerate()
                .map(|(i, c)| s.spawn(move || runner.run_trial(offset + i + 1, c)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("trial thread panicked")).collect()
        });
        for (i, (config, res)) in wave.iter().zip(results).enumerate() {
            let trial = offset + i + 1;
            let record = match res {
                Ok(o) => TrialRecord {
                    trial,
                    config: config.clone(),
                    objective: o.objective,
                    valid: o.valid,
                    epochs: o.epochs,
                    error: None,
                },
                Err(e) if e.is_usage() => return Err(e),
                Err(e) => {
                    warn!("trial {trial} failed: {e}");
                    TrialRecord {
                        trial,
                        config: config.clone(),
                        objective: 0.0,
                        valid: false,
                        epochs: 0,
                        error: Some(e.to_string()),
                    }
                }
            };
            info!("trial {trial}: objective {:.5}{}", record.objective, if record.valid { "" } else { " (invalid)" });
            if let Some(w) = log.as_mut() {
                serde_json::to_writer(&mut **w, &record)?;
                w.write_all(b"\n").map_err(|e| Error::io("trial log", e))?;
                w.flush().map_err(|e| Error::io("trial log", e))?;
            }
            trials.push(record);
        }
    }

    let pick = |valid_only: bool| {
        trials
            .iter()
            .filter(|t| t.error.is_none() && (!valid_only || t.valid))
            .fold(None::<&TrialRecord>, |best, t| match best {
                Some(b) if b.objective >= t.objective => Some(b),
                _ => Some(t),
            })
    };
    let best = match pick(true) {
        Some(t) => t,
        None => {
            let t = pick(false).ok_or_else(|| Error::invalid("every tuning trial failed"))?;
            warn!("no trial predicted all three classes; returning the best penalized score");
            t
        }
    };
    Ok(TuneResult {
        best: best.config.clone(),
        best_trial: best.trial,
        best_objective: best.objective,
        best_valid: best.valid,
        trials: trials.clone(),
    })
}
