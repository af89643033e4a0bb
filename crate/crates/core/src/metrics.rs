//! Macro-averaged multiclass metrics and the tuning objective.

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::{Label, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPrediction {
    pub probs: Vec<f64>,
    pub predicted: Label,
    pub truth: Label,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

impl ScoredPrediction {
    pub fn new(probs: Vec<f64>, truth: Label) -> Result<Self> {
        if probs.len() != NUM_CLASSES {
            return Err(Error::invalid(format!("expected {NUM_CLASSES} class probabilities, got {}", probs.len())));
        }
        let predicted = Label::from_index(argmax(&probs))?;
        Ok(Self { probs, predicted, truth })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: Label,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the class has no positives or no negatives.
    pub auc: Option<f64>,
    /// `None` when the class has no positives.
    pub ap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub auc_ovr: f64,
    pub map: f64,
    pub unique_preds: usize,
    pub n_samples: usize,
    pub per_class: Vec<ClassMetrics>,
    /// Classes left out of the macro AUC.
    pub auc_excluded: Vec<Label>,
    /// Classes left out of the mAP.
    pub ap_excluded: Vec<Label>,
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn nonempty(preds: &[ScoredPrediction]) -> Result<()> {
    if preds.is_empty() {
        Err(Error::invalid("metrics need at least one prediction"))
    } else {
        Ok(())
    }
}

/// Per-class and macro precision, recall and F1; 0/0 counts as 0.
pub fn macro_prf(preds: &[ScoredPrediction]) -> Result<(Prf, [Prf; NUM_CLASSES])> {
    nonempty(preds)?;
    let mut per = [Prf::default(); NUM_CLASSES];
    for c in Label::ALL {
        let tp = preds.iter().filter(|p| p.truth == c && p.predicted == c).count() as f64;
        let fp = preds.iter().filter(|p| p.truth != c && p.predicted == c).count() as f64;
        let fn_ = preds.iter().filter(|p| p.truth == c && p.predicted != c).count() as f64;
        let precision = safe_div(tp, tp + fp);
        let recall = safe_div(tp, tp + fn_);
        per[c.index()] = Prf {
            precision,
            recall,
            f1: safe_div(2.0 * precision * recall, precision + recall),
        };
    }
    let macro_ = Prf {
        precision: mean(&per.map(|p| p.precision)),
        recall: mean(&per.map(|p| p.recall)),
        f1: mean(&per.map(|p| p.f1)),
    };
    Ok((macro_, per))
}

/// Rank-statistic AUC for one class, ties credited one half. `None` when
/// either side is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Mid-ranks over tie groups.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * mid;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// One-vs-rest AUC per class and its macro mean over defined classes.
pub fn auc_ovr(preds: &[ScoredPrediction]) -> Result<(f64, [Option<f64>; NUM_CLASSES])> {
    nonempty(preds)?;
    let per = Label::ALL.map(|c| {
        let scores: Vec<f64> = preds.iter().map(|p| p.probs[c.index()]).collect();
        let pos: Vec<bool> = preds.iter().map(|p| p.truth == c).collect();
        binary_auc(&scores, &pos)
    });
    let defined: Vec<f64> = per.iter().flatten().copied().collect();
    if defined.len() < NUM_CLASSES {
        warn!("AUC undefined for {} class(es); excluded from the macro mean", NUM_CLASSES - defined.len());
    }
    Ok((if defined.is_empty() { 0.0 } else { mean(&defined) }, per))
}

/// Step-wise average precision: mean of the precision at each positive's
/// rank, ranking by descending score with ties broken by input order.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        if positive[k] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(total / n_pos as f64)
}

pub fn mean_ap(preds: &[ScoredPrediction]) -> Result<(f64, [Option<f64>; NUM_CLASSES])> {
    nonempty(preds)?;
    let per = Label::ALL.map(|c| {
        let scores: Vec<f64> = preds.iter().map(|p| p.probs[c.index()]).collect();
        let pos: Vec<bool> = preds.iter().map(|p| p.truth == c).collect();
        average_precision(&scores, &pos)
    });
    let defined: Vec<f64> = per.iter().flatten().copied().collect();
    if defined.len() < NUM_CLASSES {
        warn!("AP undefined for {} class(es); excluded from mAP", NUM_CLASSES - defined.len());
    }
    Ok((if defined.is_empty() { 0.0 } else { mean(&defined) }, per))
}

impl MetricReport {
    pub fn from_predictions(preds: &[ScoredPrediction]) -> Result<Self> {
        let (m, prf) = macro_prf(preds)?;
        let (auc, aucs) = auc_ovr(preds)?;
        let (map, aps) = mean_ap(preds)?;
        let mut seen = [false; NUM_CLASSES];
        preds.iter().for_each(|p| seen[p.predicted.index()] = true);
        let per_class = Label::ALL
            .iter()
            .map(|c| {
                let i = c.index();
                ClassMetrics {
                    class: *c,
                    support: preds.iter().filter(|p| p.truth == *c).count(),
                    precision: prf[i].precision,
                    recall: prf[i].recall,
                    f1: prf[i].f1,
                    auc: aucs[i],
                    ap: aps[i],
                }
            })
            .collect();
        Ok(Self {
            recall: m.recall,
            precision: m.precision,
            f1: m.f1,
            auc_ovr: auc,
            map,
            unique_preds: seen.iter().filter(|s| **s).count(),
            n_samples: preds.len(),
            per_class,
            auc_excluded: Label::ALL.iter().filter(|c| aucs[c.index()].is_none()).copied().collect(),
            ap_excluded: Label::ALL.iter().filter(|c| aps[c.index()].is_none()).copied().collect(),
        })
    }

    /// Builds a report from probability rows and true labels.
    pub fn from_probs(probs: &[Vec<f64>], truth: &[Label]) -> Result<Self> {
        if probs.len() != truth.len() {
            return Err(Error::invalid("probabilities and labels differ in count"));
        }
        let preds = probs
            .iter()
            .zip(truth)
            .map(|(p, t)| ScoredPrediction::new(p.clone(), *t))
            .collect::<Result<Vec<_>>>()?;
        Self::from_predictions(&preds)
    }

    /// True when all three classes were predicted at least once.
    pub fn is_valid_run(&self) -> bool {
        self.unique_preds == NUM_CLASSES
    }

    /// Flat key/value form: macro metrics, counts, the objective, and
    /// `<metric>_<class>` entries per class (null where undefined).
    pub fn to_flat_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("recall".into(), self.recall.into());
        m.insert("precision".into(), self.precision.into());
        m.insert("f1".into(), self.f1.into());
        m.insert("auc_ovr".into(), self.auc_ovr.into());
        m.insert("map".into(), self.map.into());
        m.insert("objective".into(), objective_score(self).into());
        m.insert("unique_preds".into(), self.unique_preds.into());
        m.insert("n_samples".into(), self.n_samples.into());
        m.insert("valid".into(), self.is_valid_run().into());
        for c in &self.per_class {
            let n = c.class.name();
            m.insert(format!("support_{n}"), c.support.into());
            m.insert(format!("precision_{n}"), c.precision.into());
            m.insert(format!("recall_{n}"), c.recall.into());
            m.insert(format!("f1_{n}"), c.f1.into());
            m.insert(format!("auc_{n}"), c.auc.map_or(Value::Null, Value::from));
            m.insert(format!("ap_{n}"), c.ap.map_or(Value::Null, Value::from));
        }
        let names = |v: &[Label]| Value::from(v.iter().map(|l| l.name()).collect::<Vec<_>>().join(","));
        m.insert("auc_excluded".into(), names(&self.auc_excluded));
        m.insert("ap_excluded".into(), names(&self.ap_excluded));
        Value::Object(m)
    }
}

/// Weighted composite `0.4 R + 0.25 F1 + 0.25 AUC + 0.1 mAP`.
pub fn composite_score(report: &MetricReport) -> f64 {
    0.4 * report.recall + 0.25 * report.f1 + 0.25 * report.auc_ovr + 0.1 * report.map
}

/// Composite when every class is predicted; otherwise a penalized blend
/// that still rewards predicting more classes.
pub fn objective_score(report: &MetricReport) -> f64 {
    let composite = composite_score(report);
    if report.unique_preds == NUM_CLASSES {
        composite
    } else {
        0.5 * composite + 0.3 * (report.unique_preds as f64 / 3.0)
    }
}
