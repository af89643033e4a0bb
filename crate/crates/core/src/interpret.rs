//! Attention summaries, per-cluster heatmaps and cluster composition tables
//! built from prediction artifacts.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionLevel, AttentionRecord};
use crate::data::{feature_group, Label, NUM_CLASSES};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 8;
pub const DEFAULT_TOP_N: usize = 10;

fn mean_weights<'a>(records: impl Iterator<Item = &'a AttentionRecord>, width: usize) -> Option<(Vec<f64>, usize)> {
    let mut sum = vec![0.0; width];
    let mut n = 0;
    for r in records {
        for (s, w) in sum.iter_mut().zip(&r.weights) {
            *s += w;
        }
        n += 1;
    }
    (n > 0).then(|| (sum.into_iter().map(|s| s / n as f64).collect(), n))
}

fn of_level(records: &[AttentionRecord], level: AttentionLevel, width: usize) -> Result<impl Iterator<Item = &AttentionRecord>> {
    if let Some(r) = records.iter().find(|r| r.level == level && r.weights.len() != width) {
        return Err(Error::invalid(format!(
            "{:?} record for {} has {} weights, expected {width}",
            level,
            r.sample_id,
            r.weights.len()
        )));
    }
    Ok(records.iter().filter(move |r| r.level == level))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityReport {
    pub text: f64,
    pub numeric: f64,
    /// `[text, numeric]` per run.
    pub per_run: Vec<[f64; 2]>,
    pub n_records: usize,
}

impl ModalityReport {
    /// Percentages to two decimals, numeric first: `"78.10 / 21.90"`.
    pub fn percentages(&self) -> String {
        format!("{:.2} / {:.2}", 100.0 * self.numeric, 100.0 * self.text)
    }
}

impl fmt::Display for ModalityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "numeric / text: {}", self.percentages())
    }
}

/// Mean modality weights pooled over every sample of every run.
pub fn modality_report(runs: &[Vec<AttentionRecord>]) -> Result<ModalityReport> {
    let mut per_run = Vec::new();
    let mut total = [0.0; 2];
    let mut n_records = 0;
    for run in runs {
        if let Some((m, n)) = mean_weights(of_level(run, AttentionLevel::Modality, 2)?, 2) {
            per_run.push([m[0], m[1]]);
            total[0] += m[0] * n as f64;
            total[1] += m[1] * n as f64;
            n_records += n;
        }
    }
    if n_records == 0 {
        return Err(Error::invalid("no modality attention records"));
    }
    Ok(ModalityReport {
        text: total[0] / n_records as f64,
        numeric: total[1] / n_records as f64,
        per_run,
        n_records,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChapterReport {
    pub notice: f64,
    pub risk: f64,
    pub n_records: usize,
}

impl fmt::Display for ChapterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "notice / risk: {:.2} / {:.2}", 100.0 * self.notice, 100.0 * self.risk)
    }
}

/// Mean chapter weights over all records.
pub fn chapter_report(records: &[AttentionRecord]) -> Result<ChapterReport> {
    let (m, n) = mean_weights(of_level(records, AttentionLevel::Chapter, 2)?, 2)
        .ok_or_else(|| Error::invalid("no chapter attention records"))?;
    Ok(ChapterReport {
        notice: m[0],
        risk: m[1],
        n_records: n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Financial,
    Macro,
}

/// Mean feature attention per (feature, quarter offset).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    /// `None` for the population grid of the macro group.
    pub cluster_id: Option<usize>,
    pub group: FeatureGroup,
    /// Row labels, highest total weight first.
    pub features: Vec<String>,
    /// Column offsets, oldest first: `[8, 7, ..., 1]` stands for Q-8..Q-1.
    pub offsets: Vec<usize>,
    /// `cells[row][col]`; 0 where no sample reached that offset.
    pub cells: Vec<Vec<f64>>,
    /// Records contributing to each column.
    pub counts: Vec<usize>,
    pub n_samples: usize,
    /// Set when the window was longer than every sequence and got cut.
    pub truncated: bool,
}

impl HeatmapGrid {
    pub fn cell(&self, feature: &str, offset: usize) -> Option<f64> {
        let r = self.features.iter().position(|f| f == feature)?;
        let c = self.offsets.iter().position(|&o| o == offset)?;
        Some(self.cells[r][c])
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["feature".to_string()];
        header.extend(self.offsets.iter().map(|o| format!("Q-{o}")));
        w.write_record(&header)?;
        for (name, row) in self.features.iter().zip(&self.cells) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeatmapOptions {
    pub window: usize,
    pub top_n: usize,
    pub group: FeatureGroup,
}

impl Default for HeatmapOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            top_n: DEFAULT_TOP_N,
            group: FeatureGroup::Financial,
        }
    }
}

/// Builds heatmaps from per-step feature records.
///
/// `clusters` maps sample ids to their hard cluster. Samples without an
/// entry are skipped, which lets callers restrict a grid to a cohort. The
/// financial group yields one grid per non-empty cluster in ascending id
/// order; the macro group yields a single population grid.
pub fn feature_heatmaps(
    records: &[AttentionRecord],
    clusters: &HashMap<String, usize>,
    feature_names: &[String],
    opts: HeatmapOptions,
) -> Result<Vec<HeatmapGrid>> {
    if opts.window == 0 || opts.top_n == 0 {
        return Err(Error::invalid("heatmap window and top_n must be positive"));
    }
    let nf = feature_names.len();
    let members = feature_group(feature_names, opts.group == FeatureGroup::Macro);
    let feature_records: Vec<&AttentionRecord> = of_level(records, AttentionLevel::Feature, nf)?
        .filter(|r| clusters.contains_key(&r.sample_id))
        .collect();
    let longest = feature_records.iter().filter_map(|r| r.offset).max().unwrap_or(0);
    let window = opts.window.min(longest.max(1));
    let truncated = window < opts.window;

    let key = |r: &AttentionRecord| match opts.group {
        FeatureGroup::Financial => Some(clusters[&r.sample_id]),
        FeatureGroup::Macro => None,
    };
    let mut ids: Vec<Option<usize>> = feature_records.iter().map(|r| key(r)).collect();
    ids.sort();
    ids.dedup();

    let mut grids = Vec::with_capacity(ids.len());
    for id in ids {
        let mut sums = vec![vec![0.0; window]; nf];
        let mut counts = vec![0usize; window];
        let mut samples: Vec<&str> = Vec::new();
        for r in feature_records.iter().filter(|r| key(r) == id) {
            samples.push(&r.sample_id);
            let Some(off) = r.offset.filter(|&o| o >= 1 && o <= window) else {
                continue;
            };
            let col = window - off;
            counts[col] += 1;
            for (f, w) in r.weights.iter().enumerate() {
                sums[f][col] += w;
            }
        }
        samples.sort_unstable();
        samples.dedup();
        let means: Vec<Vec<f64>> = sums
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .zip(&counts)
                    .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
                    .collect()
            })
            .collect();
        let mut order = members.clone();
        let total = |f: usize| means[f].iter().sum::<f64>();
        order.sort_by(|&a, &b| total(b).total_cmp(&total(a)).then(a.cmp(&b)));
        order.truncate(opts.top_n);
        grids.push(HeatmapGrid {
            cluster_id: id,
            group: opts.group,
            features: order.iter().map(|&f| feature_names[f].clone()).collect(),
            offsets: (1..=window).rev().collect(),
            cells: order.iter().map(|&f| means[f].clone()).collect(),
            counts,
            n_samples: samples.len(),
            truncated,
        });
    }
    Ok(grids)
}

/// Hard-assignment counts per cluster and class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionTable {
    /// `counts[cluster][class]`.
    pub counts: Vec<[usize; NUM_CLASSES]>,
}

impl CompositionTable {
    pub fn row_totals(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> usize {
        self.row_totals().iter().sum()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["cluster".to_string()];
        header.extend(Label::ALL.iter().map(|l| l.name().to_string()));
        header.push("total".into());
        w.write_record(&header)?;
        for (k, row) in self.counts.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(row.iter().map(|c| c.to_string()));
            rec.push(row.iter().sum::<usize>().to_string());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

impl fmt::Display for CompositionTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>8} {:>11} {:>9} {:>10} {:>7}", "cluster", "performing", "extended", "defaulted", "total")?;
        for (k, r) in self.counts.iter().enumerate() {
            writeln!(f, "{k:>8} {:>11} {:>9} {:>10} {:>7}", r[0], r[1], r[2], r.iter().sum::<usize>())?;
        }
        Ok(())
    }
}

pub fn composition_table(assignments: &[usize], labels: &[Label], k: usize) -> Result<CompositionTable> {
    if assignments.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} assignments for {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    let mut counts = vec![[0; NUM_CLASSES]; k];
    for (&a, l) in assignments.iter().zip(labels) {
        let row = counts
            .get_mut(a)
            .ok_or_else(|| Error::invalid(format!("cluster {a} out of range for k = {k}")))?;
        row[l.index()] += 1;
    }
    Ok(CompositionTable { counts })
}

/// Writes `s` to `dir/name`, creating `dir` if needed.
pub fn write_report(dir: &Path, name: &str, s: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, s).map_err(|e| Error::io(&path, e))
}
