//! The assembled network: per-step feature attention feeding the T-LSTM,
//! chapter attention over the two text vectors, modality fusion, and the
//! cluster mixture head.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionLevel, AttentionRecord, ChapterAttention, FeatureAttention, ModalityAttention, Weighting};
use crate::cluster::ClusterMoe;
use crate::data::{Dataset, Label, Sample};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, SeededRng, Tensor, Var};
use crate::objective::{total_loss_var, LossTerms, LossWeights};
use crate::tlstm::TLstm;

/// Component removals for ablation studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// ABL1: numeric modality only.
    NoText,
    /// ABL2: single prediction head, cluster losses off.
    NoCluster,
    /// ABL3: every attention aggregation replaced by a plain mean.
    NoAttention,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::NoText, Ablation::NoCluster, Ablation::NoAttention];

    pub fn code(self) -> &'static str {
        match self {
            Ablation::NoText => "ABL1",
            Ablation::NoCluster => "ABL2",
            Ablation::NoAttention => "ABL3",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ABL1" | "NO_TEXT" => Ok(Ablation::NoText),
            "ABL2" | "NO_CLUSTER" => Ok(Ablation::NoCluster),
            "ABL3" | "NO_ATTENTION" => Ok(Ablation::NoAttention),
            _ => Err(Error::invalid(format!("unknown ablation variant '{s}' (expected ABL1, ABL2 or ABL3)"))),
        }
    }
}

/// Architecture description, enough to rebuild the parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub num_features: usize,
    pub d_ch: usize,
    pub embed_size: usize,
    pub hidden_size: usize,
    pub num_clusters: usize,
    pub modal_temperature: f64,
    pub numeric_feature_temperature: f64,
    pub text_feature_temperature: f64,
    pub bypass_decay: bool,
    pub ablation: Option<Ablation>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_features == 0 || self.embed_size == 0 || self.hidden_size == 0 || self.num_clusters == 0 {
            return Err(Error::invalid("feature count, embed size, hidden size and cluster count must be positive"));
        }
        if self.d_ch == 0 && self.ablation != Some(Ablation::NoText) {
            return Err(Error::invalid("text chapters are empty; use the ABL1 variant for numeric-only data"));
        }
        for (n, t) in [
            ("modal_temperature", self.modal_temperature),
            ("numeric_feature_temperature", self.numeric_feature_temperature),
            ("text_feature_temperature", self.text_feature_temperature),
        ] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid(format!("{n} must be positive, got {t}")));
            }
        }
        Ok(())
    }

    fn weighting(&self) -> Weighting {
        if self.ablation == Some(Ablation::NoAttention) {
            Weighting::Uniform
        } else {
            Weighting::Learned
        }
    }

    fn uses_text(&self) -> bool {
        self.ablation != Some(Ablation::NoText)
    }

    /// Effective cluster count after ablation.
    pub fn clusters(&self) -> usize {
        if self.ablation == Some(Ablation::NoCluster) {
            1
        } else {
            self.num_clusters
        }
    }

    pub fn regularize_clusters(&self) -> bool {
        self.ablation != Some(Ablation::NoCluster)
    }
}

/// A padded, left-aligned batch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub ids: Vec<String>,
    /// Per step, `B×F` raw features (zeros at padding).
    pub x: Vec<Tensor>,
    /// Per step, `B×1` gaps in months.
    pub dt: Vec<Tensor>,
    pub mask: Vec<Vec<bool>>,
    pub quarters: Vec<Vec<i64>>,
    pub notice: Tensor,
    pub risk: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(samples: &[&Sample], num_features: usize, d_ch: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let b = samples.len();
        let t_max = samples.iter().map(|s| s.series.len()).max().unwrap_or(0);
        let mut x = vec![Tensor::zeros(b, num_features); t_max];
        let mut dt = vec![Tensor::zeros(b, 1); t_max];
        let mut mask = vec![vec![false; b]; t_max];
        let mut notice = Tensor::zeros(b, d_ch);
        let mut risk = Tensor::zeros(b, d_ch);
        for (r, s) in samples.iter().enumerate() {
            if s.series.is_empty() {
                return Err(Error::EmptySequence(s.firm_id().to_string()));
            }
            if s.text.notice.len() != d_ch || s.text.risk.len() != d_ch {
                return Err(Error::shape("Batch::new", format!("{}: chapter vectors are not {d_ch}-dimensional", s.firm_id())));
            }
            notice.row_mut(r).copy_from_slice(&s.text.notice);
            risk.row_mut(r).copy_from_slice(&s.text.risk);
            for (t, st) in s.series.steps.iter().enumerate() {
                if st.features.len() != num_features {
                    return Err(Error::shape(
                        "Batch::new",
                        format!("{}: {} features, model expects {num_features}", s.firm_id(), st.features.len()),
                    ));
                }
                if st.features.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!(
                        "{} has missing or non-finite values at quarter {}; impute before batching",
                        s.firm_id(),
                        st.quarter
                    )));
                }
                x[t].row_mut(r).copy_from_slice(&st.features);
                dt[t].set(r, 0, st.delta_t);
                mask[t][r] = true;
            }
        }
        Ok(Self {
            ids: samples.iter().map(|s| s.firm_id().to_string()).collect(),
            x,
            dt,
            mask,
            quarters: samples
                .iter()
                .map(|s| s.series.steps.iter().map(|st| st.quarter).collect())
                .collect(),
            notice,
            risk,
            labels: samples.iter().map(|s| s.label.index()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Graph and handles from one forward pass.
pub struct Forward {
    pub g: Graph,
    pub y_hat: Var,
    pub pi: Var,
    pub z_fusion: Var,
    pub alpha_feat: Vec<Var>,
    pub alpha_ch: Option<Var>,
    pub beta: Var,
    pub centroids: Var,
}

/// Per-sample outputs of inference over a dataset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Predictions {
    pub ids: Vec<String>,
    pub probs: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    pub z_fusion: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub records: Vec<AttentionRecord>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Hard cluster of each sample.
    pub fn clusters(&self) -> Vec<usize> {
        self.pi.iter().map(|p| crate::metrics::argmax(p)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    pub store: ParamStore,
    pub tlstm: TLstm,
    pub feature_attn: FeatureAttention,
    pub chapter_attn: ChapterAttention,
    pub modality_attn: ModalityAttention,
    pub cluster: ClusterMoe,
}

fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut SeededRng) -> Tensor {
    let keep = 1.0 - p;
    let data = (0..rows * cols)
        .map(|_| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 })
        .collect();
    Tensor::from_vec(rows, cols, data).expect("sized")
}

impl Model {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = SeededRng::new(seed);
        let mut store = ParamStore::new();
        let mut tlstm = TLstm::new(&mut store, "tlstm", spec.embed_size, spec.hidden_size, &mut rng);
        tlstm.bypass_decay = spec.bypass_decay;
        let feature_attn = FeatureAttention::new(
            &mut store,
            "feature_attn",
            spec.num_features,
            spec.embed_size,
            spec.numeric_feature_temperature,
            &mut rng,
        );
        let chapter_attn = ChapterAttention::new(
            &mut store,
            "chapter_attn",
            spec.d_ch.max(1),
            spec.hidden_size,
            spec.text_feature_temperature,
            &mut rng,
        );
        let modality_attn = ModalityAttention::new(&mut store, "modality_attn", spec.hidden_size, spec.modal_temperature, &mut rng);
        let cluster = ClusterMoe::new(&mut store, "cluster", spec.hidden_size, spec.clusters(), &mut rng)?;
        Ok(Self {
            spec,
            store,
            tlstm,
            feature_attn,
            chapter_attn,
            modality_attn,
            cluster,
        })
    }

    /// Rebuilds a model from a spec and saved parameter values.
    pub fn from_values(spec: ModelSpec, values: &[Tensor]) -> Result<Self> {
        let mut m = Self::new(spec, 0)?;
        m.store.load_values(values)?;
        Ok(m)
    }

    pub fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        if ds.num_features() != self.spec.num_features {
            return Err(Error::invalid(format!(
                "dataset has {} numeric features, model expects {}",
                ds.num_features(),
                self.spec.num_features
            )));
        }
        if self.spec.uses_text() && ds.d_ch != self.spec.d_ch {
            return Err(Error::invalid(format!(
                "dataset chapters have {} dimensions, model expects {}",
                ds.d_ch, self.spec.d_ch
            )));
        }
        Ok(())
    }

    pub fn batch(&self, samples: &[&Sample]) -> Result<Batch> {
        Batch::new(samples, self.spec.num_features, samples[0].text.notice.len())
    }

    /// Forward pass. `dropout` carries the rate and the mask stream for
    /// training; `None` is the deterministic inference path.
    pub fn forward(&self, batch: &Batch, dropout: Option<(f64, &mut SeededRng)>) -> Result<Forward> {
        let spec = &self.spec;
        let store = &self.store;
        let b = batch.len();
        let mode = spec.weighting();
        let mut g = Graph::new();

        let mut xs = Vec::with_capacity(batch.x.len());
        let mut alpha_feat = Vec::with_capacity(batch.x.len());
        let mut dts = Vec::with_capacity(batch.x.len());
        for (x, dt) in batch.x.iter().zip(&batch.dt) {
            let xv = g.constant(x.clone());
            let (alpha, xt) = self.feature_attn.forward(&mut g, store, xv, mode);
            alpha_feat.push(alpha);
            xs.push(xt);
            dts.push(g.constant(dt.clone()));
        }
        let enc = self.tlstm.encode_var(&mut g, store, &xs, &dts, &batch.mask, &batch.ids)?;
        let z_num = enc.h_last;

        let (alpha_ch, beta, mut z) = if spec.uses_text() {
            let notice = g.constant(batch.notice.clone());
            let risk = g.constant(batch.risk.clone());
            let (alpha, z_text) = self.chapter_attn.forward(&mut g, store, notice, risk, mode);
            let (beta, z) = self.modality_attn.forward(&mut g, store, z_text, z_num, mode);
            (Some(alpha), beta, z)
        } else {
            let mut fixed = Tensor::zeros(b, 2);
            (0..b).for_each(|r| fixed.set(r, 1, 1.0));
            (None, g.constant(fixed), z_num)
        };

        let mut id_mask = None;
        if let Some((p, rng)) = dropout {
            if p > 0.0 {
                let m = g.constant(dropout_mask(b, spec.hidden_size, p, rng));
                z = g.mul(z, m);
                id_mask = Some(dropout_mask(b, spec.hidden_size, p, rng));
            }
        }
        let (pi, y_hat) = self.cluster.forward(&mut g, store, z, id_mask.as_ref());
        let centroids = g.param(store, self.cluster.centroids);
        Ok(Forward {
            g,
            y_hat,
            pi,
            z_fusion: z,
            alpha_feat,
            alpha_ch,
            beta,
            centroids,
        })
    }

    /// Appends the loss to a forward pass.
    pub fn loss(&self, fwd: &mut Forward, labels: &[usize], weights: LossWeights) -> LossTerms {
        total_loss_var(
            &mut fwd.g,
            fwd.y_hat,
            fwd.pi,
            fwd.centroids,
            labels,
            weights,
            self.spec.regularize_clusters(),
        )
    }

    /// Deterministic inference over a dataset, in dataset order.
    pub fn predict(&self, ds: &Dataset, batch_size: usize) -> Result<Predictions> {
        self.check_dataset(ds)?;
        let mut out = Predictions::default();
        let refs: Vec<&Sample> = ds.samples.iter().collect();
        for chunk in refs.chunks(batch_size.max(1)) {
            let batch = Batch::new(chunk, self.spec.num_features, ds.d_ch)?;
            let fwd = self.forward(&batch, None)?;
            let g = &fwd.g;
            for (r, s) in chunk.iter().enumerate() {
                let id = s.firm_id().to_string();
                out.probs.push(g.value(fwd.y_hat).row(r).to_vec());
                out.pi.push(g.value(fwd.pi).row(r).to_vec());
                out.z_fusion.push(g.value(fwd.z_fusion).row(r).to_vec());
                let n = s.series.len();
                for (t, alpha) in fwd.alpha_feat.iter().enumerate().take(n) {
                    out.records.push(AttentionRecord {
                        level: AttentionLevel::Feature,
                        weights: g.value(*alpha).row(r).to_vec(),
                        step: Some(batch.quarters[r][t]),
                        offset: Some(n - t),
                        sample_id: id.clone(),
                    });
                }
                if let Some(a) = fwd.alpha_ch {
                    out.records.push(AttentionRecord {
                        level: AttentionLevel::Chapter,
                        weights: g.value(a).row(r).to_vec(),
                        step: None,
                        offset: None,
                        sample_id: id.clone(),
                    });
                }
                out.records.push(AttentionRecord {
                    level: AttentionLevel::Modality,
                    weights: g.value(fwd.beta).row(r).to_vec(),
                    step: None,
                    offset: None,
                    sample_id: id.clone(),
                });
                out.ids.push(id);
                out.labels.push(s.label);
            }
        }
        Ok(out)
    }
}
