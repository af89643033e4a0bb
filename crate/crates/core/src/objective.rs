//! Training objective: mean cross-entropy plus weighted cluster-usage and
//! centroid-separation regularizers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var, LOG_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_dist: f64,
    pub lambda_clus: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_dist: 0.035,
            lambda_clus: 0.004,
        }
    }
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        lambda_dist: 0.0,
        lambda_clus: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_dist", self.lambda_dist), ("lambda_clus", self.lambda_clus)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// `-ln y_hat[y]`, with the probability floored at 1e-12.
pub fn cross_entropy(y: usize, y_hat: &[f64]) -> f64 {
    -y_hat[y].max(LOG_FLOOR).ln()
}

/// `1 - H(mean pi) / ln K`: zero when clusters are used uniformly, one when
/// a single cluster takes all mass. Zero for `K = 1`.
///
/// Taken literally, the normalized entropy alone would reward collapse when
/// minimized, so its complement is used.
pub fn distribution_loss(pi_batch: &[Vec<f64>]) -> Result<f64> {
    let first = pi_batch
        .first()
        .ok_or_else(|| Error::invalid("distribution_loss of an empty batch"))?;
    let k = first.len();
    if pi_batch.iter().any(|p| p.len() != k) {
        return Err(Error::invalid("cluster assignments differ in length"));
    }
    if k <= 1 {
        return Ok(0.0);
    }
    let n = pi_batch.len() as f64;
    let h: f64 = (0..k)
        .map(|j| pi_batch.iter().map(|p| p[j]).sum::<f64>() / n)
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    Ok(1.0 - h / (k as f64).ln())
}

/// Negative mean pairwise Euclidean distance between centroid rows; zero
/// for fewer than two centroids.
pub fn separation_loss(centroids: &Tensor) -> f64 {
    let k = centroids.rows();
    if k < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            total += centroids
                .row(i)
                .iter()
                .zip(centroids.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        }
    }
    -2.0 * total / (k * (k - 1)) as f64
}

pub fn distribution_loss_var(g: &mut Graph, pi: Var) -> Var {
    let k = g.value(pi).cols();
    if k <= 1 {
        return g.constant(Tensor::scalar(0.0));
    }
    let mean = g.mean_rows(pi);
    let ln = g.ln(mean);
    let plogp = g.mul(mean, ln);
    let s = g.sum_all(plogp);
    let scaled = g.scale(s, 1.0 / (k as f64).ln());
    g.add_scalar(scaled, 1.0)
}

pub fn separation_loss_var(g: &mut Graph, centroids: Var) -> Var {
    let k = g.value(centroids).rows();
    if k < 2 {
        return g.constant(Tensor::scalar(0.0));
    }
    let mut dists = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let a = g.row(centroids, i);
            let b = g.row(centroids, j);
            let d = g.sub(a, b);
            dists.push(g.norm(d));
        }
    }
    let all = g.concat(&dists);
    let s = g.sum_all(all);
    g.scale(s, -2.0 / (k * (k - 1)) as f64)
}

/// Handles to each term of the assembled loss.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub classification: Var,
    pub distribution: Var,
    pub separation: Var,
    pub total: Var,
}

/// Assembles the full loss. With `regularize` off both cluster terms are
/// the constant 0.
pub fn total_loss_var(
    g: &mut Graph,
    y_hat: Var,
    pi: Var,
    centroids: Var,
    labels: &[usize],
    weights: LossWeights,
    regularize: bool,
) -> LossTerms {
    let classification = g.nll(y_hat, labels);
    let (distribution, separation) = if regularize {
        (distribution_loss_var(g, pi), separation_loss_var(g, centroids))
    } else {
        let z = g.constant(Tensor::scalar(0.0));
        (z, z)
    };
    let d = g.scale(distribution, weights.lambda_dist);
    let s = g.scale(separation, weights.lambda_clus);
    let reg = g.add(d, s);
    let total = g.add(classification, reg);
    LossTerms {
        classification,
        distribution,
        separation,
        total,
    }
}

/// Plain-value counterpart of [`total_loss_var`].
pub fn total_loss(
    labels: &[usize],
    y_hat: &[Vec<f64>],
    pi: &[Vec<f64>],
    centroids: &Tensor,
    weights: LossWeights,
) -> Result<f64> {
    weights.validate()?;
    if labels.is_empty() || labels.len() != y_hat.len() || labels.len() != pi.len() {
        return Err(Error::invalid("total_loss needs equally sized, non-empty batches"));
    }
    let ce = labels.iter().zip(y_hat).map(|(y, p)| cross_entropy(*y, p)).sum::<f64>() / labels.len() as f64;
    Ok(ce + weights.lambda_dist * distribution_loss(pi)? + weights.lambda_clus * separation_loss(centroids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, ParamStore};

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(1, &[0.0, 1.0, 0.0]), 0.0);
        assert!((cross_entropy(2, &[1.0 / 3.0; 3]) - 3f64.ln()).abs() < 1e-15);
        assert!((cross_entropy(1, &[0.7, 0.2, 0.1]) - 1.6094379).abs() < 1e-7);
        assert!(cross_entropy(0, &[0.0, 1.0, 0.0]).is_finite());
    }

    #[test]
    fn distribution_examples() {
        assert_eq!(distribution_loss(&[vec![0.25; 4]]).unwrap(), 0.0);
        assert_eq!(distribution_loss(&[vec![1.0, 0.0, 0.0]]).unwrap(), 1.0);
        let v = distribution_loss(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let h = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        assert!((v - (1.0 - h / 2f64.ln())).abs() < 1e-15);
        assert!((v - 0.18872).abs() < 1e-5);
        assert_eq!(distribution_loss(&[vec![1.0]]).unwrap(), 0.0);
        assert!(distribution_loss(&[]).is_err());
    }

    #[test]
    fn distribution_decreases_toward_uniform() {
        let mut last = f64::INFINITY;
        for s in 0..=10 {
            let t = s as f64 / 10.0;
            let p = vec![1.0 - t * 2.0 / 3.0, t / 3.0, t / 3.0];
            let v = distribution_loss(&[p]).unwrap();
            assert!(v < last || s == 0);
            assert!((0.0..=1.0).contains(&v));
            last = v;
        }
    }

    #[test]
    fn separation_examples() {
        assert_eq!(separation_loss(&Tensor::filled(3, 2, 0.4)), 0.0);
        assert_eq!(separation_loss(&Tensor::from_vec(2, 1, vec![0.0, 1.0]).unwrap()), -1.0);
        let c = Tensor::from_vec(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        assert!((separation_loss(&c) + 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(separation_loss(&Tensor::row_vector(vec![1.0, 2.0])), 0.0);
    }

    #[test]
    fn separation_translation_and_scale() {
        let c = Tensor::from_vec(3, 2, vec![0.1, 0.5, -1.0, 2.0, 0.3, -0.7]).unwrap();
        let shifted = Tensor::from_vec(3, 2, c.data().iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 5.0 } else { -2.0 }).collect()).unwrap();
        let scaled = Tensor::from_vec(3, 2, c.data().iter().map(|v| v * 3.0).collect()).unwrap();
        assert!((separation_loss(&c) - separation_loss(&shifted)).abs() < 1e-12);
        assert!((3.0 * separation_loss(&c) - separation_loss(&scaled)).abs() < 1e-12);
    }

    #[test]
    fn total_loss_composition() {
        let labels = [0, 2];
        let y = vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.2, 0.6]];
        let pi = vec![vec![0.7, 0.3], vec![0.4, 0.6]];
        let c = Tensor::from_vec(2, 2, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
        let ce = (cross_entropy(0, &y[0]) + cross_entropy(2, &y[1])) / 2.0;
        assert!((total_loss(&labels, &y, &pi, &c, LossWeights::ZERO).unwrap() - ce).abs() < 1e-12);
        let w = LossWeights::default();
        let expect = ce + 0.035 * distribution_loss(&pi).unwrap() + 0.004 * -5.0;
        assert!((total_loss(&labels, &y, &pi, &c, w).unwrap() - expect).abs() < 1e-12);

        let perfect = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        let uni = vec![vec![0.5, 0.5]; 2];
        assert_eq!(total_loss(&labels, &perfect, &uni, &Tensor::zeros(2, 2), w).unwrap(), 0.0);
    }

    #[test]
    fn graph_terms_match_plain_and_grad_check() {
        let mut store = ParamStore::new();
        let logits = store.add("logits", Tensor::from_vec(3, 3, vec![0.2, -0.4, 1.0, 0.5, 0.1, -0.3, 0.0, 0.9, 0.4]).unwrap());
        let cent = store.add("c", Tensor::from_vec(3, 2, vec![0.1, 0.5, -1.0, 2.0, 0.3, -0.7]).unwrap());
        let labels = [0, 1, 2];
        let w = LossWeights { lambda_dist: 0.3, lambda_clus: 0.2 };

        let mut g = Graph::new();
        let l = g.param(&store, logits);
        let pi = g.softmax(l, 1.0);
        let c = g.param(&store, cent);
        let terms = total_loss_var(&mut g, pi, pi, c, &labels, w, true);
        let pis: Vec<Vec<f64>> = (0..3).map(|r| g.value(pi).row(r).to_vec()).collect();
        let plain = total_loss(&labels, &pis, &pis, store.value(cent), w).unwrap();
        assert!((g.value(terms.total).item() - plain).abs() < 1e-12);

        let err = grad_check(&mut store, 1e-5, |s, want| {
            let mut g = Graph::new();
            let l = g.param(s, logits);
            let pi = g.softmax(l, 1.0);
            let c = g.param(s, cent);
            let t = total_loss_var(&mut g, pi, pi, c, &labels, w, true);
            if want {
                g.backward(t.total, s);
            }
            Ok(g.value(t.total).item())
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
