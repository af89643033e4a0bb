//! Training, evaluation, checkpoints, repeated runs, ablations and
//! hyperparameter search.

mod checkpoint;
mod pipeline;
mod runs;
mod train;
mod tune;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use pipeline::{ablate, checkpoint_predictions, evaluate, prepare, run, test_split, PreparedData, RunResult, TrainedRun};
pub use runs::{repeated_runs, summarize, MetricSummary, PipelineExecutor, RunExecutor, RunRecord, RunSummary};
pub use train::{train, train_with_scorer, validation_score, EpochStats, TrainOutcome};
pub use tune::{tune, IntRange, LogRange, PipelineTrialRunner, SearchSpace, StepRange, TrialOutcome, TrialRecord, TrialRunner, TuneResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Ablation, ModelSpec};
use crate::objective::LossWeights;

/// Every knob of a training run. Defaults are the reference optimum; the
/// fields after `ablation` are pipeline settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub num_clusters: usize,
    pub cluster_loss_weight: f64,
    pub dist_loss_weight: f64,
    pub modal_temperature: f64,
    pub numeric_feature_temperature: f64,
    pub text_feature_temperature: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// At most one variant.
    pub ablation: Vec<Ablation>,

    /// Width of the per-feature embedding rows, i.e. the T-LSTM input size.
    pub feature_embed_size: usize,
    /// Identifier pre-training passes over the K-Means labels.
    pub warmup_epochs: usize,
    /// Forces the decay gate to 1.
    pub bypass_decay: bool,
    /// Fraction of the raw data kept for training; the rest is the test set.
    pub train_fraction: f64,
    /// Fraction of original training samples held out for early stopping.
    pub val_fraction: f64,
    /// Seed of the train/test split, kept apart from `seed` so repeated runs
    /// share one test set.
    pub split_seed: u64,
    /// Observed quarters removed before a default or extension.
    pub exclude_quarters: usize,
    pub smote_k: usize,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_size: 512,
            dropout: 0.3,
            learning_rate: 0.0006175651418191845,
            weight_decay: 1.0162398945608497e-06,
            num_clusters: 8,
            cluster_loss_weight: 0.004,
            dist_loss_weight: 0.035,
            modal_temperature: 2.6,
            numeric_feature_temperature: 0.9,
            text_feature_temperature: 0.55,
            patience: 13,
            batch_size: 8,
            max_epochs: 200,
            seed: 0,
            ablation: Vec::new(),
            feature_embed_size: 32,
            warmup_epochs: 20,
            bypass_decay: false,
            train_fraction: 0.8,
            val_fraction: 0.1,
            split_seed: 0,
            exclude_quarters: 2,
            smote_k: 5,
            eval_batch_size: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("num_clusters", self.num_clusters),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("feature_embed_size", self.feature_embed_size),
            ("smote_k", self.smote_k),
            ("eval_batch_size", self.eval_batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        for (name, v) in [("train_fraction", self.train_fraction), ("val_fraction", self.val_fraction)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        if self.ablation.len() > 1 {
            return Err(Error::invalid("ablations are run one at a time; give at most one variant"));
        }
        self.loss_weights().validate()?;
        Ok(())
    }

    pub fn ablation(&self) -> Option<Ablation> {
        self.ablation.first().copied()
    }

    pub fn with_ablation(&self, variant: Option<Ablation>) -> Self {
        Self {
            ablation: variant.into_iter().collect(),
            ..self.clone()
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_dist: self.dist_loss_weight,
            lambda_clus: self.cluster_loss_weight,
        }
    }

    pub fn model_spec(&self, num_features: usize, d_ch: usize) -> ModelSpec {
        ModelSpec {
            num_features,
            d_ch,
            embed_size: self.feature_embed_size,
            hidden_size: self.hidden_size,
            num_clusters: self.num_clusters,
            modal_temperature: self.modal_temperature,
            numeric_feature_temperature: self.numeric_feature_temperature,
            text_feature_temperature: self.text_feature_temperature,
            bypass_decay: self.bypass_decay,
            ablation: self.ablation(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_optimum() {
        let c = TrainConfig::default();
        assert_eq!(c.hidden_size, 512);
        assert_eq!(c.dropout, 0.3);
        assert_eq!(c.learning_rate, 0.0006175651418191845);
        assert_eq!(c.weight_decay, 1.0162398945608497e-06);
        assert_eq!(c.num_clusters, 8);
        assert_eq!((c.cluster_loss_weight, c.dist_loss_weight), (0.004, 0.035));
        assert_eq!(
            (c.modal_temperature, c.numeric_feature_temperature, c.text_feature_temperature),
            (2.6, 0.9, 0.55)
        );
        assert_eq!((c.patience, c.batch_size, c.max_epochs), (13, 8, 200));
        c.validate().unwrap();
    }

    #[test]
    fn combined_ablations_rejected() {
        let c = TrainConfig {
            ablation: vec![Ablation::NoText, Ablation::NoAttention],
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let c = TrainConfig {
            ablation: vec![Ablation::NoCluster],
            ..Default::default()
        };
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&s).unwrap(), c);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"hiddn_size": 3}"#).is_err());
        let partial: TrainConfig = serde_json::from_str(r#"{"hidden_size": 16, "ablation": ["no_attention"]}"#).unwrap();
        assert_eq!(partial.hidden_size, 16);
        assert_eq!(partial.ablation(), Some(Ablation::NoAttention));
    }
}
