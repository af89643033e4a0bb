use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::data::{ImputeStats, Normalizer};
use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec};
use crate::numerics::Tensor;

pub const CHECKPOINT_FORMAT: &str = "emdlot-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Everything needed to rebuild a trained model and preprocess new data
/// the same way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub spec: ModelSpec,
    pub feature_names: Vec<String>,
    pub impute: ImputeStats,
    pub normalizer: Normalizer,
    pub best_epoch: usize,
    pub best_score: f64,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(
        config: &TrainConfig,
        model: &Model,
        feature_names: &[String],
        impute: &ImputeStats,
        normalizer: &Normalizer,
        best_epoch: usize,
        best_score: f64,
    ) -> Self {
        let params = model
            .store
            .iter()
            .map(|(name, p)| NamedTensor {
                name: name.to_string(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                data: p.value.data().to_vec(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            spec: model.spec.clone(),
            feature_names: feature_names.to_vec(),
            impute: impute.clone(),
            normalizer: normalizer.clone(),
            best_epoch,
            best_score,
            params,
        }
    }

    /// Rebuilds the model, checking that names and shapes line up with the
    /// layout the spec implies.
    pub fn model(&self) -> Result<Model> {
        let mut model = Model::new(self.spec.clone(), 0)?;
        if model.store.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors stored, architecture has {}",
                self.params.len(),
                model.store.len()
            )));
        }
        let mut values = Vec::with_capacity(self.params.len());
        for ((name, p), t) in model.store.iter().zip(&self.params) {
            if name != t.name || p.value.rows() != t.rows || p.value.cols() != t.cols {
                return Err(Error::Checkpoint(format!(
                    "tensor '{}' ({}x{}) does not match expected '{}' ({}x{})",
                    t.name,
                    t.rows,
                    t.cols,
                    name,
                    p.value.rows(),
                    p.value.cols()
                )));
            }
            values.push(Tensor::from_vec(t.rows, t.cols, t.data.clone()).map_err(|e| Error::Checkpoint(e.to_string()))?);
        }
        model.store.load_values(&values)?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        let body = self.to_json()?;
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(body.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&body)
    }

    pub fn from_json(body: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint (format '{}')", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }
}
