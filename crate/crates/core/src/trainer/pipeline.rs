use std::path::PathBuf;

use log::info;
use serde::{Deserialize, Serialize};

use super::{train, Checkpoint, EpochStats, TrainConfig};
use crate::data::{
    carve_validation, describe_counts, exclude_pre_default, smote, split, Dataset, ExclusionSummary, ImputeStats,
    Normalizer, SplitSummary,
};
use crate::error::{Error, Result};
use crate::interpret::{composition_table, CompositionTable};
use crate::metrics::{objective_score, MetricReport};
use crate::model::{Ablation, Model, Predictions};
use crate::numerics::SeededRng;

/// Streams derived from `split_seed`.
const TRAIN_IMPUTE_STREAM: u64 = 10;
const TEST_IMPUTE_STREAM: u64 = 11;
/// Streams derived from `seed`.
const VAL_STREAM: u64 = 20;
const SMOTE_STREAM: u64 = 21;

#[derive(Clone, Debug)]
pub struct PreparedData {
    /// Oversampled fitting set.
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub impute: ImputeStats,
    pub normalizer: Normalizer,
    pub exclusion: ExclusionSummary,
    pub split: SplitSummary,
}

/// Excludes pre-event quarters and splits into raw `(train, test)`.
pub fn test_split(config: &TrainConfig, raw: &Dataset) -> Result<(Dataset, Dataset, ExclusionSummary, SplitSummary)> {
    let (kept, exclusion) = exclude_pre_default(raw, config.exclude_quarters);
    let (train, test, summary) = split(&kept, config.train_fraction, config.split_seed)?;
    Ok((train, test, exclusion, summary))
}

fn seed_of(seed: u64, stream: u64) -> u64 {
    SeededRng::new(seed).derive(stream).next_u64()
}

fn preprocess(ds: &Dataset, impute: &ImputeStats, normalizer: &Normalizer, seed: u64) -> Result<Dataset> {
    normalizer.apply(&impute.apply(ds, seed))
}

/// Full preprocessing: split, impute and scale with training statistics,
/// hold out validation originals, then oversample the rest.
pub fn prepare(config: &TrainConfig, raw: &Dataset) -> Result<PreparedData> {
    config.validate()?;
    raw.validate()?;
    let (train_raw, test_raw, exclusion, split_summary) = test_split(config, raw)?;
    let impute = ImputeStats::fit(&train_raw);
    let train_imp = impute.apply(&train_raw, seed_of(config.split_seed, TRAIN_IMPUTE_STREAM));
    let normalizer = Normalizer::fit(&train_imp);
    let train_n = normalizer.apply(&train_imp)?;
    let test = preprocess(&test_raw, &impute, &normalizer, seed_of(config.split_seed, TEST_IMPUTE_STREAM))?;
    let (fit, val) = carve_validation(&train_n, config.val_fraction, seed_of(config.seed, VAL_STREAM))?;
    let over = smote(&fit, config.smote_k, seed_of(config.seed, SMOTE_STREAM))?;
    info!(
        "split: train {} -> fit {} -> oversampled {}, validation {}, test {}",
        describe_counts(train_n.class_counts()),
        describe_counts(fit.class_counts()),
        describe_counts(over.dataset.class_counts()),
        describe_counts(val.class_counts()),
        describe_counts(test.class_counts())
    );
    Ok(PreparedData {
        train: over.dataset,
        val,
        test,
        impute,
        normalizer,
        exclusion,
        split: split_summary,
    })
}

/// Serializable summary of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// `full` or the ablation code.
    pub variant: String,
    pub config: TrainConfig,
    /// Metrics on the untouched test split.
    pub report: MetricReport,
    pub valid: bool,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_score: f64,
    pub test_objective: f64,
    pub history: Vec<EpochStats>,
    /// Hard cluster composition of the test split.
    pub composition: CompositionTable,
    pub checkpoint: Option<PathBuf>,
}

/// A run's summary plus the in-memory artifacts behind it.
#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub result: RunResult,
    pub model: Model,
    pub prepared: PreparedData,
    pub test_predictions: Predictions,
    pub checkpoint: Checkpoint,
}

fn report_for(model: &Model, ds: &Dataset, batch: usize) -> Result<(MetricReport, Predictions)> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let p = model.predict(ds, batch)?;
    Ok((MetricReport::from_probs(&p.probs, &p.labels)?, p))
}

/// Prepares data, trains and evaluates on the test split.
pub fn run(config: &TrainConfig, raw: &Dataset) -> Result<TrainedRun> {
    let prepared = prepare(config, raw)?;
    let outcome = train(config, &prepared.train, &prepared.val)?;
    let (report, preds) = report_for(&outcome.model, &prepared.test, config.eval_batch_size)?;
    let composition = composition_table(&preds.clusters(), &preds.labels, outcome.model.cluster.k)?;
    let checkpoint = Checkpoint::new(
        config,
        &outcome.model,
        &raw.feature_names,
        &prepared.impute,
        &prepared.normalizer,
        outcome.best_epoch,
        outcome.best_score,
    );
    let result = RunResult {
        variant: config.ablation().map_or("full".to_string(), |a| a.code().to_string()),
        config: config.clone(),
        valid: report.is_valid_run(),
        test_objective: objective_score(&report),
        report,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs_run,
        best_val_score: outcome.best_score,
        history: outcome.history,
        composition,
        checkpoint: None,
    };
    Ok(TrainedRun {
        result,
        model: outcome.model,
        prepared,
        test_predictions: preds,
        checkpoint,
    })
}

/// Runs one ablation variant.
pub fn ablate(variant: Ablation, config: &TrainConfig, raw: &Dataset) -> Result<TrainedRun> {
    if !config.ablation.is_empty() && config.ablation() != Some(variant) {
        return Err(Error::invalid(format!(
            "config already requests {}; ablations are run one at a time",
            config.ablation.iter().map(|a| a.code()).collect::<Vec<_>>().join("+")
        )));
    }
    run(&config.with_ablation(Some(variant)), raw)
}

/// Predicts raw (unimputed, unscaled) data with a checkpoint, applying its
/// preprocessing. Dropout is never active here.
pub fn checkpoint_predictions(checkpoint: &Checkpoint, raw: &Dataset) -> Result<Predictions> {
    if raw.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    if raw.feature_names != checkpoint.feature_names {
        return Err(Error::invalid(format!(
            "feature mismatch: data has {:?}, checkpoint expects {:?}",
            raw.feature_names, checkpoint.feature_names
        )));
    }
    let model = checkpoint.model()?;
    let ds = preprocess(
        raw,
        &checkpoint.impute,
        &checkpoint.normalizer,
        seed_of(checkpoint.config.split_seed, TEST_IMPUTE_STREAM),
    )?;
    model.predict(&ds, checkpoint.config.eval_batch_size)
}

/// Evaluates a checkpoint on raw data; see [`checkpoint_predictions`].
pub fn evaluate(checkpoint: &Checkpoint, raw: &Dataset) -> Result<MetricReport> {
    let p = checkpoint_predictions(checkpoint, raw)?;
    MetricReport::from_probs(&p.probs, &p.labels)
}
