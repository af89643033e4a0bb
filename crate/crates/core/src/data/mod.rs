//! Dataset representation, CSV ingestion, preprocessing and the synthetic
//! generator.

mod io;
mod preprocess;
mod smote;
mod synth;

pub use io::{load_dataset, load_dir, save_dataset, save_dir, LABELS_FILE, SERIES_FILE, TEXT_FILE};
pub use preprocess::{
    carve_validation, describe_counts, exclude_pre_default, impute, split, ExclusionSummary, ImputeStats,
    Normalizer, SplitSummary,
};
pub use smote::{flatten, smote, SmoteOrigin, SmoteOutput};
pub use synth::{synthesize, SynthConfig, DETERIORATING_FEATURES, FINANCIAL_FEATURES, MACRO_FEATURES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 3;

/// Months between consecutive quarters.
pub const MONTHS_PER_QUARTER: f64 = 3.0;

/// Feature names with this prefix belong to the macroeconomic group; all
/// other numeric features are firm-level financial indicators.
pub const MACRO_PREFIX: &str = "macro_";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Performing = 0,
    Extended = 1,
    Defaulted = 2,
}

impl Label {
    pub const ALL: [Label; NUM_CLASSES] = [Label::Performing, Label::Extended, Label::Defaulted];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Label> {
        Label::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::invalid(format!("label code {i} not in {{0,1,2}}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Performing => "performing",
            Label::Extended => "extended",
            Label::Defaulted => "defaulted",
        }
    }
}

/// One observed quarter of a firm.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub quarter: i64,
    /// Raw values; `NaN` where unobserved until imputation fills them.
    pub features: Vec<f64>,
    /// Months since the previous observed step; 0 for the first step.
    pub delta_t: f64,
    pub observed: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FirmSeries {
    pub firm_id: String,
    pub steps: Vec<Step>,
}

impl FirmSeries {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Recomputes `delta_t` from quarter indices.
    pub fn recompute_deltas(&mut self) {
        let mut prev = None;
        for s in &mut self.steps {
            s.delta_t = match prev {
                None => 0.0,
                Some(q) => MONTHS_PER_QUARTER * (s.quarter - q) as f64,
            };
            prev = Some(s.quarter);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextFeatures {
    pub notice: Vec<f64>,
    pub risk: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub series: FirmSeries,
    pub text: TextFeatures,
    pub label: Label,
    pub synthetic: bool,
}

impl Sample {
    pub fn firm_id(&self) -> &str {
        &self.series.firm_id
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub feature_names: Vec<String>,
    pub d_ch: usize,
}

impl Dataset {
    pub fn empty(feature_names: Vec<String>, d_ch: usize) -> Self {
        Self {
            samples: Vec::new(),
            feature_names,
            d_ch,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    /// A dataset sharing this one's schema but holding `samples`.
    pub fn with_samples(&self, samples: Vec<Sample>) -> Self {
        Self {
            samples,
            feature_names: self.feature_names.clone(),
            d_ch: self.d_ch,
        }
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for s in &self.samples {
            c[s.label.index()] += 1;
        }
        c
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Indices of features in the macroeconomic group.
    pub fn macro_features(&self) -> Vec<usize> {
        feature_group(&self.feature_names, true)
    }

    pub fn financial_features(&self) -> Vec<usize> {
        feature_group(&self.feature_names, false)
    }

    /// Checks the shared-schema invariants.
    pub fn validate(&self) -> Result<()> {
        let f = self.num_features();
        for s in &self.samples {
            if s.text.notice.len() != self.d_ch || s.text.risk.len() != self.d_ch {
                return Err(Error::invalid(format!(
                    "firm {}: chapter vectors must have length {}",
                    s.firm_id(),
                    self.d_ch
                )));
            }
            let mut prev = None;
            for st in &s.series.steps {
                if st.features.len() != f || st.observed.len() != f {
                    return Err(Error::invalid(format!(
                        "firm {}: expected {f} features at quarter {}",
                        s.firm_id(),
                        st.quarter
                    )));
                }
                if let Some(q) = prev {
                    if st.quarter <= q {
                        return Err(Error::invalid(format!(
                            "firm {}: quarter indices must be strictly increasing",
                            s.firm_id()
                        )));
                    }
                }
                prev = Some(st.quarter);
            }
        }
        Ok(())
    }
}

pub fn feature_group(names: &[String], macro_group: bool) -> Vec<usize> {
    names
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with(MACRO_PREFIX) == macro_group)
        .map(|(i, _)| i)
        .collect()
}
