//! Minority oversampling for variable-length multimodal samples.
//!
//! Distances and interpolation happen in a flattened space
//! `[per-feature mean over observed steps | per-feature last observed value |
//! notice | risk]`. A synthetic series keeps the base sample's quarters and
//! gaps; over the trailing steps the base and the neighbor both have
//! (aligned at the most recent step) its values are blended with the same
//! interpolation factor, earlier steps keep the base values.

use log::warn;

use super::{Dataset, Label, Sample};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Absolute noise added to duplicated samples of single-member classes.
const DUPLICATE_NOISE: f64 = 0.01;

/// Provenance of one generated sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoteOrigin {
    /// Position of the synthetic sample in the output dataset.
    pub index: usize,
    /// Positions in the input dataset.
    pub base: usize,
    pub neighbor: usize,
    pub t: f64,
    /// Interpolated flattened vector `base + t * (neighbor - base)`.
    pub flat: Vec<f64>,
    /// Set when the class had a single member and the sample is a noisy copy.
    pub duplicated: bool,
}

#[derive(Clone, Debug)]
pub struct SmoteOutput {
    pub dataset: Dataset,
    pub origins: Vec<SmoteOrigin>,
}

pub fn flatten(sample: &Sample, num_features: usize) -> Vec<f64> {
    let steps = &sample.series.steps;
    let mut means = Vec::with_capacity(num_features);
    let mut lasts = Vec::with_capacity(num_features);
    for j in 0..num_features {
        let obs: Vec<f64> = steps
            .iter()
            .filter(|s| s.observed[j])
            .map(|s| s.features[j])
            .collect();
        let vals: Vec<f64> = if obs.is_empty() {
            steps.iter().map(|s| s.features[j]).collect()
        } else {
            obs
        };
        means.push(if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 });
        lasts.push(vals.last().copied().unwrap_or(0.0));
    }
    let mut out = means;
    out.extend(lasts);
    out.extend_from_slice(&sample.text.notice);
    out.extend_from_slice(&sample.text.risk);
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

fn interpolate(base: &Sample, neighbor: &Sample, t: f64, id: String) -> Sample {
    let mut out = base.clone();
    out.series.firm_id = id;
    out.synthetic = true;
    let lb = base.series.len();
    let ln = neighbor.series.len();
    let overlap = lb.min(ln);
    for s in 0..overlap {
        let bs = &mut out.series.steps[lb - overlap + s];
        let ns = &neighbor.series.steps[ln - overlap + s];
        bs.features = lerp(&bs.features, &ns.features, t);
        for (o, n) in bs.observed.iter_mut().zip(&ns.observed) {
            *o = *o && *n;
        }
    }
    out.text.notice = lerp(&base.text.notice, &neighbor.text.notice, t);
    out.text.risk = lerp(&base.text.risk, &neighbor.text.risk, t);
    out
}

/// Oversamples every minority class up to the majority count. Originals come
/// first in the output, in input order, followed by the synthetic samples.
pub fn smote(train: &Dataset, k_neighbors: usize, seed: u64) -> Result<SmoteOutput> {
    if k_neighbors == 0 {
        return Err(Error::invalid("smote needs k_neighbors >= 1"));
    }
    let counts = train.class_counts();
    let majority = counts.iter().copied().max().unwrap_or(0);
    let nf = train.num_features();
    let mut rng = SeededRng::new(seed);
    let mut samples = train.samples.clone();
    let mut origins = Vec::new();

    for class in Label::ALL {
        let members: Vec<usize> = (0..train.len())
            .filter(|&i| train.samples[i].label == class)
            .collect();
        let n = members.len();
        if n == 0 || n == majority {
            if n == 0 && majority > 0 {
                warn!("class {} is empty; nothing to oversample", class.name());
            }
            continue;
        }
        let needed = majority - n;
        let flats: Vec<Vec<f64>> = members.iter().map(|&i| flatten(&train.samples[i], nf)).collect();

        if n == 1 {
            warn!(
                "class {} has a single sample; oversampling by noisy duplication",
                class.name()
            );
            let base = &train.samples[members[0]];
            for c in 0..needed {
                let mut dup = base.clone();
                dup.synthetic = true;
                dup.series.firm_id = format!("{}#smote{c}", base.firm_id());
                for st in &mut dup.series.steps {
                    st.features.iter_mut().for_each(|v| *v += DUPLICATE_NOISE * rng.normal());
                }
                dup.text.notice.iter_mut().for_each(|v| *v += DUPLICATE_NOISE * rng.normal());
                dup.text.risk.iter_mut().for_each(|v| *v += DUPLICATE_NOISE * rng.normal());
                origins.push(SmoteOrigin {
                    index: samples.len(),
                    base: members[0],
                    neighbor: members[0],
                    t: 0.0,
                    flat: flatten(&dup, nf),
                    duplicated: true,
                });
                samples.push(dup);
            }
            continue;
        }

        let k = k_neighbors.min(n - 1);
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|a| {
                let mut others: Vec<usize> = (0..n).filter(|&b| b != a).collect();
                others.sort_by(|&x, &y| {
                    sq_dist(&flats[a], &flats[x])
                        .total_cmp(&sq_dist(&flats[a], &flats[y]))
                        .then(x.cmp(&y))
                });
                others.truncate(k);
                others
            })
            .collect();

        for c in 0..needed {
            let a = c % n;
            let b = neighbors[a][rng.below(k)];
            let t = rng.uniform_open();
            let base = &train.samples[members[a]];
            let nb = &train.samples[members[b]];
            let syn = interpolate(base, nb, t, format!("{}#smote{c}", base.firm_id()));
            origins.push(SmoteOrigin {
                index: samples.len(),
                base: members[a],
                neighbor: members[b],
                t,
                flat: lerp(&flats[a], &flats[b], t),
                duplicated: false,
            });
            samples.push(syn);
        }
    }

    Ok(SmoteOutput {
        dataset: train.with_samples(samples),
        origins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FirmSeries, Step, TextFeatures};

    fn one_d(id: &str, label: Label, value: f64) -> Sample {
        Sample {
            series: FirmSeries {
                firm_id: id.into(),
                steps: vec![Step {
                    quarter: 0,
                    features: vec![value],
                    delta_t: 0.0,
                    observed: vec![true],
                }],
            },
            text: TextFeatures {
                notice: vec![],
                risk: vec![],
            },
            label,
            synthetic: false,
        }
    }

    fn ds(samples: Vec<Sample>) -> Dataset {
        Dataset {
            samples,
            feature_names: vec!["x".into()],
            d_ch: 0,
        }
    }

    #[test]
    fn two_member_minority_interpolates_strictly_inside() {
        let d = ds(vec![
            one_d("p0", Label::Performing, 5.0),
            one_d("p1", Label::Performing, 6.0),
            one_d("p2", Label::Performing, 7.0),
            one_d("e0", Label::Extended, 0.0),
            one_d("e1", Label::Extended, 1.0),
            one_d("e2", Label::Extended, 0.5),
            one_d("d0", Label::Defaulted, 0.0),
            one_d("d1", Label::Defaulted, 1.0),
        ]);
        let out = smote(&d, 5, 3).unwrap();
        assert_eq!(out.dataset.class_counts(), [3, 3, 3]);
        let syn: Vec<&Sample> = out.dataset.samples.iter().filter(|s| s.synthetic && s.label == Label::Defaulted).collect();
        assert_eq!(syn.len(), 1);
        let v = syn[0].series.steps[0].features[0];
        assert!(v > 0.0 && v < 1.0, "{v}");
    }

    #[test]
    fn balanced_input_unchanged() {
        let d = ds(vec![
            one_d("a", Label::Performing, 1.0),
            one_d("b", Label::Extended, 2.0),
            one_d("c", Label::Defaulted, 3.0),
        ]);
        let out = smote(&d, 5, 0).unwrap();
        assert_eq!(out.dataset, d);
        assert!(out.origins.is_empty());
    }

    #[test]
    fn singleton_class_falls_back_to_duplication() {
        let d = ds(vec![
            one_d("a", Label::Performing, 1.0),
            one_d("b", Label::Performing, 2.0),
            one_d("c", Label::Performing, 2.5),
            one_d("d", Label::Defaulted, 3.0),
        ]);
        let out = smote(&d, 5, 0).unwrap();
        assert_eq!(out.dataset.class_counts(), [3, 0, 3]);
        assert!(out.origins.iter().all(|o| o.duplicated));
        for o in &out.origins {
            let v = out.dataset.samples[o.index].series.steps[0].features[0];
            assert!((v - 3.0).abs() < 0.1);
        }
    }

    #[test]
    fn series_blend_aligns_most_recent_steps() {
        let mut base = one_d("b", Label::Extended, 0.0);
        base.series.steps = (0..3)
            .map(|q| Step {
                quarter: q,
                features: vec![q as f64],
                delta_t: if q == 0 { 0.0 } else { 3.0 },
                observed: vec![true],
            })
            .collect();
        let mut nb = one_d("n", Label::Extended, 10.0);
        nb.series.steps[0].features[0] = 10.0;
        let s = interpolate(&base, &nb, 0.5, "s".into());
        let vals: Vec<f64> = s.series.steps.iter().map(|st| st.features[0]).collect();
        assert_eq!(vals, vec![0.0, 1.0, 6.0]);
        assert_eq!(s.series.steps[2].delta_t, 3.0);
    }
}
