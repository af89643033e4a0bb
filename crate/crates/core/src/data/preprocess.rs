use log::warn;
use serde::{Deserialize, Serialize};

use super::{Dataset, Label, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExclusionSummary {
    /// Non-performing samples with too few steps, removed entirely.
    pub dropped: usize,
    /// Steps removed, counting those of dropped samples.
    pub removed_steps: usize,
}

/// Removes the last `n_quarters` observed steps of every non-performing
/// sample. Samples left with no steps are dropped.
pub fn exclude_pre_default(ds: &Dataset, n_quarters: usize) -> (Dataset, ExclusionSummary) {
    let mut summary = ExclusionSummary::default();
    if n_quarters == 0 {
        return (ds.clone(), summary);
    }
    let mut samples = Vec::with_capacity(ds.len());
    for s in &ds.samples {
        if s.label == Label::Performing {
            samples.push(s.clone());
            continue;
        }
        let n = s.series.len();
        summary.removed_steps += n.min(n_quarters);
        if n <= n_quarters {
            summary.dropped += 1;
            continue;
        }
        let mut kept = s.clone();
        kept.series.steps.truncate(n - n_quarters);
        samples.push(kept);
    }
    if summary.dropped > 0 {
        warn!(
            "pre-default exclusion dropped {} sample(s) with <= {n_quarters} steps",
            summary.dropped
        );
    }
    (ds.with_samples(samples), summary)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitSummary {
    /// Classes with a single sample; that sample went to the first part.
    pub singleton_classes: Vec<Label>,
}

fn stratified_indices(
    labels: &[Label],
    candidates: &[usize],
    first_frac: f64,
    rng: &mut SeededRng,
) -> (Vec<usize>, Vec<usize>, SplitSummary) {
    let mut first = Vec::new();
    let mut second = Vec::new();
    let mut summary = SplitSummary::default();
    for class in Label::ALL {
        let mut idx: Vec<usize> = candidates.iter().copied().filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut idx);
        let n = idx.len();
        match n {
            0 => {}
            1 => {
                summary.singleton_classes.push(class);
                warn!("class {} has one sample; it is kept in the training part", class.name());
                first.extend(idx);
            }
            _ => {
                let k = ((first_frac * n as f64).round() as usize).clamp(1, n - 1);
                first.extend_from_slice(&idx[..k]);
                second.extend_from_slice(&idx[k..]);
            }
        }
    }
    first.sort_unstable();
    second.sort_unstable();
    (first, second, summary)
}

/// Stratified train/test split. Per class, `round(train_frac * n)` samples go
/// to train, keeping at least one test sample for every class with two or
/// more samples. Both parts keep the input order.
pub fn split(ds: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset, SplitSummary)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid(format!("train_frac {train_frac} not in (0, 1)")));
    }
    let labels = ds.labels();
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut rng = SeededRng::new(seed);
    let (tr, te, summary) = stratified_indices(&labels, &all, train_frac, &mut rng);
    let pick = |idx: &[usize]| ds.with_samples(idx.iter().map(|&i| ds.samples[i].clone()).collect());
    Ok((pick(&tr), pick(&te), summary))
}

/// Carves a stratified validation set of `val_frac` out of the original
/// (non-synthetic) samples of `train`. Returns `(fit, validation)`.
pub fn carve_validation(train: &Dataset, val_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(val_frac > 0.0 && val_frac < 1.0) {
        return Err(Error::invalid(format!("val_frac {val_frac} not in (0, 1)")));
    }
    let labels = train.labels();
    let originals: Vec<usize> = (0..train.len()).filter(|&i| !train.samples[i].synthetic).collect();
    let mut rng = SeededRng::new(seed);
    let (_, val, _) = stratified_indices(&labels, &originals, 1.0 - val_frac, &mut rng);
    let mut in_val = vec![false; train.len()];
    val.iter().for_each(|&i| in_val[i] = true);
    let fit = train
        .samples
        .iter()
        .zip(&in_val)
        .filter(|(_, v)| !**v)
        .map(|(s, _)| s.clone())
        .collect();
    let val = val.iter().map(|&i| train.samples[i].clone()).collect();
    Ok((train.with_samples(fit), train.with_samples(val)))
}

/// Per-feature statistics over observed entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputeStats {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub sd: Vec<f64>,
    pub observed_count: Vec<usize>,
}

/// Spread of imputation noise relative to the feature's standard deviation.
pub const IMPUTE_NOISE_SCALE: f64 = 0.1;

impl ImputeStats {
    pub fn fit(ds: &Dataset) -> Self {
        let f = ds.num_features();
        let mut sum = vec![0.0; f];
        let mut sumsq = vec![0.0; f];
        let mut count = vec![0usize; f];
        for s in &ds.samples {
            for st in &s.series.steps {
                for j in 0..f {
                    if st.observed[j] {
                        sum[j] += st.features[j];
                        count[j] += 1;
                    }
                }
            }
        }
        let mean: Vec<f64> = (0..f)
            .map(|j| if count[j] > 0 { sum[j] / count[j] as f64 } else { 0.0 })
            .collect();
        for s in &ds.samples {
            for st in &s.series.steps {
                for j in 0..f {
                    if st.observed[j] {
                        sumsq[j] += (st.features[j] - mean[j]).powi(2);
                    }
                }
            }
        }
        let sd = (0..f)
            .map(|j| if count[j] > 0 { (sumsq[j] / count[j] as f64).sqrt() } else { 0.0 })
            .collect();
        Self {
            mean,
            sd,
            observed_count: count,
        }
    }

    /// Fills every missing entry with `mean + N(0, 1) * 0.1 * sd`. Masks are
    /// left as they were.
    pub fn apply(&self, ds: &Dataset, seed: u64) -> Dataset {
        let mut rng = SeededRng::new(seed);
        let mut out = ds.clone();
        for (j, c) in self.observed_count.iter().enumerate() {
            if *c == 0 {
                warn!("feature {} is never observed; filling with 0", ds.feature_names[j]);
            }
        }
        for s in &mut out.samples {
            for st in &mut s.series.steps {
                for j in 0..st.features.len() {
                    if !st.observed[j] {
                        st.features[j] = if self.observed_count[j] == 0 {
                            0.0
                        } else {
                            self.mean[j] + rng.normal() * IMPUTE_NOISE_SCALE * self.sd[j]
                        };
                    }
                }
            }
        }
        out
    }
}

/// Single imputation with statistics taken from `ds` itself.
pub fn impute(ds: &Dataset, seed: u64) -> Dataset {
    ImputeStats::fit(ds).apply(ds, seed)
}

/// Per-feature z-scoring fitted on a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn fit(ds: &Dataset) -> Self {
        let stats = ImputeStats::fit(ds);
        let scale = stats.sd.iter().map(|s| if *s > 1e-12 { *s } else { 1.0 }).collect();
        Self {
            mean: stats.mean,
            scale,
        }
    }

    pub fn identity(num_features: usize) -> Self {
        Self {
            mean: vec![0.0; num_features],
            scale: vec![1.0; num_features],
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if self.mean.len() != ds.num_features() {
            return Err(Error::invalid(format!(
                "normalizer expects {} features, dataset has {}",
                self.mean.len(),
                ds.num_features()
            )));
        }
        let mut out = ds.clone();
        for s in &mut out.samples {
            for st in &mut s.series.steps {
                for (j, v) in st.features.iter_mut().enumerate() {
                    *v = (*v - self.mean[j]) / self.scale[j];
                }
            }
        }
        Ok(out)
    }
}

/// Count of each class, for logging.
pub fn describe_counts(c: [usize; NUM_CLASSES]) -> String {
    format!("{}/{}/{}", c[0], c[1], c[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FirmSeries, Sample, Step, TextFeatures};

    pub(crate) fn sample(id: &str, label: Label, steps: usize, f: usize) -> Sample {
        let mut series = FirmSeries {
            firm_id: id.to_string(),
            steps: (0..steps)
                .map(|q| Step {
                    quarter: q as i64,
                    features: (0..f).map(|j| (q * 10 + j) as f64).collect(),
                    delta_t: 0.0,
                    observed: vec![true; f],
                })
                .collect(),
        };
        series.recompute_deltas();
        Sample {
            series,
            text: TextFeatures {
                notice: vec![0.0; 2],
                risk: vec![1.0; 2],
            },
            label,
            synthetic: false,
        }
    }

    fn dataset(samples: Vec<Sample>, f: usize) -> Dataset {
        Dataset {
            samples,
            feature_names: (0..f).map(|j| format!("f{j}")).collect(),
            d_ch: 2,
        }
    }

    #[test]
    fn exclusion_trims_non_performing() {
        let ds = dataset(
            vec![
                sample("p", Label::Performing, 8, 1),
                sample("d", Label::Defaulted, 8, 1),
                sample("e", Label::Extended, 2, 1),
            ],
            1,
        );
        let (out, summary) = exclude_pre_default(&ds, 2);
        assert_eq!(out.len(), 2);
        assert_eq!(out.samples[0], ds.samples[0]);
        assert_eq!(out.samples[1].series.len(), 6);
        assert_eq!(summary.dropped, 1);
        assert_eq!(summary.removed_steps, 4);

        let (same, s0) = exclude_pre_default(&ds, 0);
        assert_eq!(same, ds);
        assert_eq!(s0, ExclusionSummary::default());
    }

    #[test]
    fn split_table_four_counts() {
        let mut samples = Vec::new();
        for (label, n) in [(Label::Performing, 1565), (Label::Extended, 19), (Label::Defaulted, 11)] {
            for i in 0..n {
                samples.push(sample(&format!("{label:?}{i}"), label, 1, 1));
            }
        }
        let ds = dataset(samples, 1);
        let (tr, te, _) = split(&ds, 0.8, 5).unwrap();
        assert_eq!(tr.class_counts(), [1252, 15, 9]);
        assert_eq!(te.class_counts(), [313, 4, 2]);
    }

    #[test]
    fn split_single_class_and_determinism() {
        let ds = dataset((0..10).map(|i| sample(&i.to_string(), Label::Performing, 1, 1)).collect(), 1);
        let (tr, te, _) = split(&ds, 0.8, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr2, te2, _) = split(&ds, 0.8, 1).unwrap();
        assert_eq!((tr, te), (tr2, te2));
        assert!(split(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn singleton_class_goes_to_train() {
        let mut samples: Vec<Sample> =
            (0..5).map(|i| sample(&i.to_string(), Label::Performing, 1, 1)).collect();
        samples.push(sample("x", Label::Defaulted, 1, 1));
        let (tr, te, summary) = split(&dataset(samples, 1), 0.8, 3).unwrap();
        assert_eq!(summary.singleton_classes, vec![Label::Defaulted]);
        assert_eq!(tr.class_counts()[2], 1);
        assert_eq!(te.class_counts()[2], 0);
    }

    #[test]
    fn imputation_cases() {
        let ds = dataset(vec![sample("a", Label::Performing, 3, 2)], 2);
        assert_eq!(impute(&ds, 1), ds);

        // zero-variance feature with mean 5
        let mut s = sample("a", Label::Performing, 3, 1);
        for st in &mut s.series.steps {
            st.features[0] = 5.0;
        }
        s.series.steps[1].features[0] = f64::NAN;
        s.series.steps[1].observed[0] = false;
        let out = impute(&dataset(vec![s], 1), 9);
        assert_eq!(out.samples[0].series.steps[1].features[0], 5.0);
        assert!(!out.samples[0].series.steps[1].observed[0]);
    }

    #[test]
    fn imputation_three_missing_cells() {
        let mut s = sample("a", Label::Performing, 6, 2);
        for (q, j) in [(1, 0), (3, 1), (4, 0)] {
            s.series.steps[q].features[j] = f64::NAN;
            s.series.steps[q].observed[j] = false;
        }
        let ds = dataset(vec![s], 2);
        let stats = ImputeStats::fit(&ds);
        // direct recomputation over observed cells
        let obs0 = [0.0, 20.0, 30.0, 50.0];
        let m0 = obs0.iter().sum::<f64>() / 4.0;
        let sd0 = (obs0.iter().map(|v| (v - m0).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((stats.mean[0] - m0).abs() < 1e-12 && (stats.sd[0] - sd0).abs() < 1e-12);

        let a = impute(&ds, 4);
        let b = impute(&ds, 4);
        assert_eq!(a, b);
        for (q, j) in [(1, 0), (3, 1), (4, 0)] {
            let v = a.samples[0].series.steps[q].features[j];
            assert!((v - stats.mean[j]).abs() <= 0.5 * stats.sd[j], "{v}");
        }
    }

    #[test]
    fn never_observed_feature_filled_with_zero() {
        let mut s = sample("a", Label::Performing, 2, 1);
        for st in &mut s.series.steps {
            st.features[0] = f64::NAN;
            st.observed[0] = false;
        }
        let out = impute(&dataset(vec![s], 1), 0);
        assert!(out.samples[0].series.steps.iter().all(|st| st.features[0] == 0.0));
    }

    #[test]
    fn validation_carve_excludes_synthetic() {
        let mut samples: Vec<Sample> = (0..20)
            .map(|i| sample(&i.to_string(), Label::ALL[i % 3], 1, 1))
            .collect();
        for s in samples.iter_mut().skip(15) {
            s.synthetic = true;
        }
        let ds = dataset(samples, 1);
        let (fit, val) = carve_validation(&ds, 0.1, 2).unwrap();
        assert_eq!(fit.len() + val.len(), 20);
        assert!(val.samples.iter().all(|s| !s.synthetic));
        assert!(val.class_counts().iter().all(|c| *c >= 1));
    }
}
