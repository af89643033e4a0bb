//! Temperature-scaled attention at three levels: over per-feature
//! projections at each step, over the two text chapters, and over the two
//! modality embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, SeededRng, Tensor, Var};
use crate::tlstm::uniform;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionLevel {
    Feature,
    Chapter,
    Modality,
}

/// Weights produced for one sample at one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub level: AttentionLevel,
    pub weights: Vec<f64>,
    /// Calendar quarter of the step (feature level only).
    pub step: Option<i64>,
    /// Position counted back from the last valid step, 1 for the last one
    /// (feature level only).
    pub offset: Option<usize>,
    pub sample_id: String,
}

/// How aggregation weights are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    Learned,
    /// Plain mean over candidates; temperatures are ignored.
    Uniform,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("temperature must be positive, got {tau}")))
    }
}

fn uniform_weights(g: &mut Graph, rows: usize, n: usize) -> Var {
    g.constant(Tensor::filled(rows, n, 1.0 / n as f64))
}

/// `softmax_j(w·tanh(v_j) / tau)` per row; each item is `B×n`, `w` is `1×n`.
pub fn tanh_scores_var(g: &mut Graph, w: Var, items: &[Var], tau: f64) -> Var {
    let scores: Vec<Var> = items
        .iter()
        .map(|v| {
            let t = g.tanh(*v);
            g.matmul_t(t, w)
        })
        .collect();
    let s = g.concat(&scores);
    g.softmax(s, tau)
}

/// Feature attention on one step. `x_raw` is `B×F`, `e` is `F×k`, `w` is
/// `1×k`. Returns `(alpha: B×F, x_t: B×k)`.
pub fn feature_attention_var(g: &mut Graph, x_raw: Var, e: Var, w: Var, tau: f64, mode: Weighting) -> (Var, Var) {
    let (b, nf) = (g.value(x_raw).rows(), g.value(x_raw).cols());
    let projected: Vec<Var> = (0..nf)
        .map(|i| {
            let xi = g.col(x_raw, i);
            let ei = g.row(e, i);
            g.outer(xi, ei)
        })
        .collect();
    let alpha = match mode {
        Weighting::Learned => tanh_scores_var(g, w, &projected, tau),
        Weighting::Uniform => uniform_weights(g, b, nf),
    };
    let x_t = g.weighted_sum(alpha, &projected);
    (alpha, x_t)
}

/// Chapter attention over equally shaped chapter vectors (`B×n` each).
pub fn chapter_attention_var(g: &mut Graph, chapters: &[Var], w: Var, tau: f64, mode: Weighting) -> (Var, Var) {
    let b = g.value(chapters[0]).rows();
    let alpha = match mode {
        Weighting::Learned => tanh_scores_var(g, w, chapters, tau),
        Weighting::Uniform => uniform_weights(g, b, chapters.len()),
    };
    let h = g.weighted_sum(alpha, chapters);
    (alpha, h)
}

/// Modality attention with one projection per modality and no squashing:
/// `softmax_m(w_m·z_m / tau)`. Order is (text, numeric).
pub fn modality_attention_var(
    g: &mut Graph,
    z_text: Var,
    z_num: Var,
    w_text: Var,
    w_num: Var,
    tau: f64,
    mode: Weighting,
) -> (Var, Var) {
    let b = g.value(z_text).rows();
    let beta = match mode {
        Weighting::Learned => {
            let st = g.matmul_t(z_text, w_text);
            let sn = g.matmul_t(z_num, w_num);
            let s = g.concat(&[st, sn]);
            g.softmax(s, tau)
        }
        Weighting::Uniform => uniform_weights(g, b, 2),
    };
    let z = g.weighted_sum(beta, &[z_text, z_num]);
    (beta, z)
}

fn row(g: &mut Graph, v: &[f64]) -> Var {
    g.constant(Tensor::row_vector(v.to_vec()))
}

/// Two-chapter attention on plain vectors. Returns `(alpha, h_text)`.
pub fn chapter_attention(h_notice: &[f64], h_risk: &[f64], w: &[f64], tau: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_tau(tau)?;
    if h_notice.is_empty() || h_notice.len() != h_risk.len() || w.len() != h_notice.len() {
        return Err(Error::invalid(format!(
            "chapter vectors must be non-empty and equal length (notice {}, risk {}, w {})",
            h_notice.len(),
            h_risk.len(),
            w.len()
        )));
    }
    let mut g = Graph::new();
    let a = row(&mut g, h_notice);
    let b = row(&mut g, h_risk);
    let wv = row(&mut g, w);
    let (alpha, h) = chapter_attention_var(&mut g, &[a, b], wv, tau, Weighting::Learned);
    Ok((g.value(alpha).data().to_vec(), g.value(h).data().to_vec()))
}

/// Feature attention on one step with embedding matrix `e` (`F×k`).
pub fn feature_attention(x_raw: &[f64], e: &Tensor, w: &[f64], tau: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_tau(tau)?;
    if x_raw.is_empty() || e.rows() != x_raw.len() || e.cols() != w.len() {
        return Err(Error::invalid(format!(
            "feature attention shapes: x {}, E {:?}, w {}",
            x_raw.len(),
            e.shape(),
            w.len()
        )));
    }
    let mut g = Graph::new();
    let x = row(&mut g, x_raw);
    let ev = g.constant(e.clone());
    let wv = row(&mut g, w);
    let (alpha, xt) = feature_attention_var(&mut g, x, ev, wv, tau, Weighting::Learned);
    Ok((g.value(alpha).data().to_vec(), g.value(xt).data().to_vec()))
}

/// Modality attention on plain vectors. Returns `(beta, z_fusion)` with
/// `beta` ordered (text, numeric).
pub fn modality_attention(
    z_text: &[f64],
    z_num: &[f64],
    w_text: &[f64],
    w_num: &[f64],
    tau: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_tau(tau)?;
    let d = z_text.len();
    if d == 0 || z_num.len() != d || w_text.len() != d || w_num.len() != d {
        return Err(Error::invalid(format!(
            "modality embeddings must share one dimension (text {d}, numeric {})",
            z_num.len()
        )));
    }
    let mut g = Graph::new();
    let (zt, zn, wt, wn) = (row(&mut g, z_text), row(&mut g, z_num), row(&mut g, w_text), row(&mut g, w_num));
    let (beta, z) = modality_attention_var(&mut g, zt, zn, wt, wn, tau, Weighting::Learned);
    Ok((g.value(beta).data().to_vec(), g.value(z).data().to_vec()))
}

/// Feature-level parameters: embedding rows `E` (`F×k`) and projection `w`.
#[derive(Clone, Debug)]
pub struct FeatureAttention {
    pub e: ParamId,
    pub w: ParamId,
    pub tau: f64,
}

impl FeatureAttention {
    pub fn new(store: &mut ParamStore, prefix: &str, num_features: usize, embed: usize, tau: f64, rng: &mut SeededRng) -> Self {
        let e = store.add(format!("{prefix}.E"), uniform(num_features, embed, 1.0, rng));
        let w = store.add(format!("{prefix}.w"), uniform(1, embed, 1.0 / (embed as f64).sqrt(), rng));
        Self { e, w, tau }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x_raw: Var, mode: Weighting) -> (Var, Var) {
        let e = g.param(store, self.e);
        let w = g.param(store, self.w);
        feature_attention_var(g, x_raw, e, w, self.tau, mode)
    }
}

/// Chapter-level projection plus the affine adapter from the chapter space
/// to the hidden size.
#[derive(Clone, Debug)]
pub struct ChapterAttention {
    pub w: ParamId,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
    pub tau: f64,
}

impl ChapterAttention {
    pub fn new(store: &mut ParamStore, prefix: &str, d_ch: usize, hidden: usize, tau: f64, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (d_ch as f64).sqrt();
        let w = store.add(format!("{prefix}.w"), uniform(1, d_ch, bound, rng));
        let proj_w = store.add(format!("{prefix}.proj_W"), uniform(hidden, d_ch, bound, rng));
        let proj_b = store.add(format!("{prefix}.proj_b"), Tensor::zeros(1, hidden));
        Self { w, proj_w, proj_b, tau }
    }

    /// Returns `(alpha: B×2, z_text: B×hidden)`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, notice: Var, risk: Var, mode: Weighting) -> (Var, Var) {
        let w = g.param(store, self.w);
        let (alpha, h_text) = chapter_attention_var(g, &[notice, risk], w, self.tau, mode);
        let pw = g.param(store, self.proj_w);
        let pb = g.param(store, self.proj_b);
        (alpha, g.affine(h_text, pw, pb))
    }
}

#[derive(Clone, Debug)]
pub struct ModalityAttention {
    pub w_text: ParamId,
    pub w_num: ParamId,
    pub tau: f64,
}

impl ModalityAttention {
    pub fn new(store: &mut ParamStore, prefix: &str, hidden: usize, tau: f64, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_text = store.add(format!("{prefix}.w_text"), uniform(1, hidden, bound, rng));
        let w_num = store.add(format!("{prefix}.w_num"), uniform(1, hidden, bound, rng));
        Self { w_text, w_num, tau }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, z_text: Var, z_num: Var, mode: Weighting) -> (Var, Var) {
        let wt = g.param(store, self.w_text);
        let wn = g.param(store, self.w_num);
        modality_attention_var(g, z_text, z_num, wt, wn, self.tau, mode)
    }
}
