use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::metrics::{objective_score, MetricReport};
use crate::model::Model;
use crate::numerics::{AdamW, SeededRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_score: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters restored to the best epoch.
    pub model: Model,
    pub best_epoch: usize,
    pub best_score: f64,
    pub epochs_run: usize,
    pub history: Vec<EpochStats>,
}

/// Objective score of `model` on `val`.
pub fn validation_score(model: &Model, val: &Dataset, batch_size: usize) -> Result<f64> {
    let p = model.predict(val, batch_size)?;
    Ok(objective_score(&MetricReport::from_probs(&p.probs, &p.labels)?))
}

/// Trains with early stopping on the validation objective.
pub fn train(config: &TrainConfig, train_ds: &Dataset, val_ds: &Dataset) -> Result<TrainOutcome> {
    let batch = config.eval_batch_size;
    train_with_scorer(config, train_ds, val_ds, |_, m| validation_score(m, val_ds, batch))
}

/// As [`train`], with the per-epoch validation score supplied by `scorer`,
/// which receives the 1-based epoch and the current model.
pub fn train_with_scorer<S>(config: &TrainConfig, train_ds: &Dataset, val_ds: &Dataset, mut scorer: S) -> Result<TrainOutcome>
where
    S: FnMut(usize, &Model) -> Result<f64>,
{
    config.validate()?;
    if train_ds.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if val_ds.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    let root = SeededRng::new(config.seed);
    let spec = config.model_spec(train_ds.num_features(), train_ds.d_ch);
    let mut model = Model::new(spec, root.derive(0).next_u64())?;
    model.check_dataset(train_ds)?;
    model.check_dataset(val_ds)?;
    let mut shuffle_rng = root.derive(1);
    let mut dropout_rng = root.derive(2);

    if model.spec.regularize_clusters() && model.cluster.k > 1 {
        let emb = model.predict(train_ds, config.eval_batch_size)?.z_fusion;
        let km = model.cluster.warm_start(
            &mut model.store,
            &emb,
            root.derive(3).next_u64(),
            config.warmup_epochs,
            config.learning_rate,
        )?;
        debug!("warm start: k-means objective {:.4}", km.objective());
    }

    let mut opt = AdamW::new(config.learning_rate, config.weight_decay);
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut best_score = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_values = model.store.values();
    let mut history = Vec::new();
    let weights = config.loss_weights();

    for epoch in 1..=config.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let samples: Vec<&Sample> = chunk.iter().map(|&i| &train_ds.samples[i]).collect();
            let batch = model.batch(&samples)?;
            let mut fwd = model.forward(&batch, Some((config.dropout, &mut dropout_rng)))?;
            let terms = model.loss(&mut fwd, &batch.labels, weights);
            let loss = fwd.g.value(terms.total).item();
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi + 1,
                    loss,
                });
            }
            model.store.zero_grad();
            fwd.g.backward(terms.total, &mut model.store);
            opt.step(&mut model.store);
            model.cluster.clip_centroids(&mut model.store);
            loss_sum += loss;
            n_batches += 1;
        }
        let train_loss = loss_sum / n_batches as f64;
        let val_score = scorer(epoch, &model)?;
        history.push(EpochStats {
            epoch,
            train_loss,
            val_score,
        });
        debug!("epoch {epoch}: loss {train_loss:.5}, validation {val_score:.5}");
        if val_score > best_score {
            best_score = val_score;
            best_epoch = epoch;
            best_values = model.store.values();
        } else if epoch - best_epoch >= config.patience {
            info!("early stop at epoch {epoch}; best epoch {best_epoch} ({best_score:.5})");
            break;
        }
    }
    let epochs_run = history.len();
    model.store.load_values(&best_values)?;
    model.store.zero_grad();
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_score,
        epochs_run,
        history,
    })
}
