use crate::error::{Error, Result};

use super::SeededRng;

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_history: Vec<f64>,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.below(points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            rng.categorical(&d2)
        } else {
            rng.below(points.len())
        };
        let c = points[next].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// A cluster that ends an iteration empty is re-seeded at the point farthest
/// from its assigned centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::invalid("kmeans needs k >= 1"));
    }
    if points.len() < k {
        return Err(Error::invalid(format!(
            "kmeans needs at least k = {k} points, got {}",
            points.len()
        )));
    }
    if max_iter == 0 {
        return Err(Error::invalid("kmeans needs max_iter >= 1"));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::shape("kmeans", "ragged point dimensions"));
    }

    let mut rng = SeededRng::new(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let mut labels = vec![usize::MAX; points.len()];
    let mut history = Vec::new();

    for _ in 0..max_iter {
        let mut changed = false;
        let mut obj = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
            obj += d;
        }
        history.push(obj);
        if !changed {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centroids[labels[a]]);
                        let db = sq_dist(&points[b], &centroids[labels[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("points nonempty");
                centroids[j] = points[far].clone();
            }
        }
    }

    // Final assignment so labels match the returned centroids.
    let mut obj = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (j, d) = nearest(p, &centroids);
        labels[i] = j;
        obj += d;
    }
    if history.last().is_none_or(|last| obj != *last) {
        history.push(obj);
    }

    Ok(KMeansResult {
        centroids,
        labels,
        objective_history: history,
    })
}
