//! Soft clustering with per-cluster prediction heads.
//!
//! A two-layer tanh perceptron maps the fused embedding to `K` logits whose
//! softmax is the assignment `pi`. Each cluster owns an affine head whose
//! softmax is a class distribution, and the prediction is the
//! `pi`-weighted mixture of those distributions. Centroids are free
//! parameters shaped only by the separation term after initialization.

use crate::data::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::numerics::{kmeans, AdamW, Graph, KMeansResult, ParamId, ParamStore, SeededRng, Tensor, Var};
use crate::tlstm::uniform;

/// Hard cap on centroid norms, enforced after every optimizer step.
pub const CENTROID_MAX_NORM: f64 = 100.0;

const WARM_START_BATCH: usize = 32;
const KMEANS_MAX_ITER: usize = 100;

#[derive(Clone, Debug)]
pub struct ClusterMoe {
    pub k: usize,
    pub dim: usize,
    pub centroids: ParamId,
    pub id_w1: ParamId,
    pub id_b1: ParamId,
    pub id_w2: ParamId,
    pub id_b2: ParamId,
    pub head_w: Vec<ParamId>,
    pub head_b: Vec<ParamId>,
}

impl ClusterMoe {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize, k: usize, rng: &mut SeededRng) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::invalid("cluster count and embedding size must be positive"));
        }
        let bound = 1.0 / (dim as f64).sqrt();
        let centroids = store.add(format!("{prefix}.centroids"), uniform(k, dim, bound, rng));
        let id_w1 = store.add(format!("{prefix}.id_W1"), uniform(dim, dim, bound, rng));
        let id_b1 = store.add(format!("{prefix}.id_b1"), Tensor::zeros(1, dim));
        let id_w2 = store.add(format!("{prefix}.id_W2"), uniform(k, dim, bound, rng));
        let id_b2 = store.add(format!("{prefix}.id_b2"), Tensor::zeros(1, k));
        let mut head_w = Vec::with_capacity(k);
        let mut head_b = Vec::with_capacity(k);
        for j in 0..k {
            head_w.push(store.add(format!("{prefix}.head{j}.W"), uniform(NUM_CLASSES, dim, bound, rng)));
            head_b.push(store.add(format!("{prefix}.head{j}.b"), Tensor::zeros(1, NUM_CLASSES)));
        }
        Ok(Self {
            k,
            dim,
            centroids,
            id_w1,
            id_b1,
            id_w2,
            id_b2,
            head_w,
            head_b,
        })
    }

    pub fn identifier_ids(&self) -> Vec<ParamId> {
        vec![self.id_w1, self.id_b1, self.id_w2, self.id_b2]
    }

    /// Identifier logits for `z` (`B×dim`). `dropout` is an optional
    /// pre-scaled mask applied to the hidden layer.
    pub fn logits_var(&self, g: &mut Graph, store: &ParamStore, z: Var, dropout: Option<&Tensor>) -> Var {
        let w1 = g.param(store, self.id_w1);
        let b1 = g.param(store, self.id_b1);
        let a = g.affine(z, w1, b1);
        let mut hidden = g.tanh(a);
        if let Some(mask) = dropout {
            let m = g.constant(mask.clone());
            hidden = g.mul(hidden, m);
        }
        let w2 = g.param(store, self.id_w2);
        let b2 = g.param(store, self.id_b2);
        g.affine(hidden, w2, b2)
    }

    pub fn assign_var(&self, g: &mut Graph, store: &ParamStore, z: Var, dropout: Option<&Tensor>) -> Var {
        let logits = self.logits_var(g, store, z, dropout);
        g.softmax(logits, 1.0)
    }

    /// Per-cluster class distributions, each `B×C`.
    pub fn heads_var(&self, g: &mut Graph, store: &ParamStore, z: Var) -> Vec<Var> {
        (0..self.k)
            .map(|j| {
                let w = g.param(store, self.head_w[j]);
                let b = g.param(store, self.head_b[j]);
                let l = g.affine(z, w, b);
                g.softmax(l, 1.0)
            })
            .collect()
    }

    /// Returns `(pi: B×K, y_hat: B×C)`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, z: Var, dropout: Option<&Tensor>) -> (Var, Var) {
        let pi = self.assign_var(g, store, z, dropout);
        let heads = self.heads_var(g, store, z);
        let y_hat = g.weighted_sum(pi, &heads);
        (pi, y_hat)
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::invalid(format!("embedding has {} entries, expected {}", z.len(), self.dim)));
        }
        Ok(())
    }

    pub fn assign(&self, store: &ParamStore, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        let mut g = Graph::new();
        let zv = g.constant(Tensor::row_vector(z.to_vec()));
        let pi = self.assign_var(&mut g, store, zv, None);
        Ok(g.value(pi).data().to_vec())
    }

    /// Per-cluster head distributions for one embedding.
    pub fn head_probs(&self, store: &ParamStore, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_dim(z)?;
        let mut g = Graph::new();
        let zv = g.constant(Tensor::row_vector(z.to_vec()));
        Ok(self
            .heads_var(&mut g, store, zv)
            .into_iter()
            .map(|h| g.value(h).data().to_vec())
            .collect())
    }

    pub fn mixture_predict(&self, store: &ParamStore, pi: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        if pi.len() != self.k || pi.iter().any(|p| *p < 0.0) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("cluster assignment is not a simplex of the right size"));
        }
        let heads = self.head_probs(store, z)?;
        let mut out = vec![0.0; NUM_CLASSES];
        for (p, h) in pi.iter().zip(&heads) {
            for (o, v) in out.iter_mut().zip(h) {
                *o += p * v;
            }
        }
        Ok(out)
    }

    /// Scales any centroid row whose norm exceeds [`CENTROID_MAX_NORM`].
    pub fn clip_centroids(&self, store: &mut ParamStore) {
        let c = store.value_mut(self.centroids);
        for r in 0..c.rows() {
            let row = c.row_mut(r);
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > CENTROID_MAX_NORM {
                row.iter_mut().for_each(|v| *v *= CENTROID_MAX_NORM / n);
            }
        }
    }

    /// Sets centroids from K-Means on `embeddings`, then fits the identifier
    /// to the hard K-Means labels by cross-entropy for `epochs` passes.
    /// Prediction heads are left untouched.
    pub fn warm_start(
        &self,
        store: &mut ParamStore,
        embeddings: &[Vec<f64>],
        seed: u64,
        epochs: usize,
        lr: f64,
    ) -> Result<KMeansResult> {
        if embeddings.iter().any(|e| e.len() != self.dim) {
            return Err(Error::invalid("warm_start embeddings have the wrong dimension"));
        }
        let km = kmeans(embeddings, self.k, seed, KMEANS_MAX_ITER)?;
        let flat: Vec<f64> = km.centroids.iter().flatten().copied().collect();
        *store.value_mut(self.centroids) = Tensor::from_vec(self.k, self.dim, flat)?;
        self.clip_centroids(store);
        if self.k == 1 || epochs == 0 {
            return Ok(km);
        }

        let ids = self.identifier_ids();
        let mut opt = AdamW::new(lr, 0.0);
        let mut rng = SeededRng::new(seed).derive(1);
        let mut order: Vec<usize> = (0..embeddings.len()).collect();
        for _ in 0..epochs {
            rng.shuffle(&mut order);
            for chunk in order.chunks(WARM_START_BATCH) {
                let data: Vec<f64> = chunk.iter().flat_map(|&i| embeddings[i].iter().copied()).collect();
                let labels: Vec<usize> = chunk.iter().map(|&i| km.labels[i]).collect();
                let mut g = Graph::new();
                let z = g.constant(Tensor::from_vec(chunk.len(), self.dim, data)?);
                let pi = self.assign_var(&mut g, store, z, None);
                let loss = g.nll(pi, &labels);
                store.zero_grad();
                g.backward(loss, store);
                opt.step_ids(store, &ids);
            }
        }
        store.zero_grad();
        Ok(km)
    }
}
