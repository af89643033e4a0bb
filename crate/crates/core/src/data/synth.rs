//! Synthetic issuers with planted default regimes.
//!
//! Numeric features are on a standardized scale. Performing firms are
//! stationary around a firm-specific level. Over the final
//! `signal_quarters` grid quarters, extended firms ramp up their short-term
//! debt ratio and defaulted firms see both investing and financing cash flows
//! deteriorate while their risk chapter shifts on the first
//! `text_signal_dims` dimensions. Risk chapters also carry a fixed offset on
//! their last `marker_dims` dimensions, and notice chapters are pure noise.

use serde::{Deserialize, Serialize};

use super::{Dataset, FirmSeries, Label, Sample, Step, TextFeatures, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

pub const FINANCIAL_FEATURES: [&str; 6] = [
    "net_cf_operating",
    "net_cf_investing",
    "net_cf_financing",
    "short_term_debt_ratio",
    "debt_to_asset",
    "roa",
];
pub const MACRO_FEATURES: [&str; 2] = ["macro_gdp_growth", "macro_trade_balance"];

/// Features that deteriorate ahead of a default.
pub const DETERIORATING_FEATURES: [&str; 2] = ["net_cf_investing", "net_cf_financing"];
const STD_IDX: usize = 3;
const CF_IDX: [usize; 2] = [1, 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_firms: usize,
    /// Class priors for performing, extended, defaulted.
    pub priors: [f64; NUM_CLASSES],
    pub min_quarters: usize,
    pub max_quarters: usize,
    /// Probability that an interior grid quarter goes unreported.
    pub dropout_prob: f64,
    /// Probability that an individual cell is missing.
    pub missing_prob: f64,
    pub d_ch: usize,
    pub signal_quarters: usize,
    pub extended_amplitude: f64,
    pub default_amplitude: f64,
    pub text_shift: f64,
    pub text_signal_dims: usize,
    pub notice_noise: f64,
    pub risk_marker: f64,
    pub marker_dims: usize,
    pub firm_noise: f64,
    pub step_noise: f64,
    /// Last calendar quarter index available to any firm.
    pub horizon: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_firms: 2000,
            priors: [0.96, 0.025, 0.015],
            min_quarters: 12,
            max_quarters: 16,
            dropout_prob: 0.1,
            missing_prob: 0.02,
            d_ch: 40,
            signal_quarters: 6,
            extended_amplitude: 4.0,
            default_amplitude: 2.5,
            text_shift: 1.0,
            text_signal_dims: 10,
            notice_noise: 2.0,
            risk_marker: 2.0,
            marker_dims: 5,
            firm_noise: 0.5,
            step_noise: 0.5,
            horizon: 39,
            seed: 2024,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.priors.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.priors.iter().any(|p| *p < 0.0) {
            return Err(Error::invalid(format!(
                "priors must be non-negative and sum to 1, got {:?}",
                self.priors
            )));
        }
        if self.n_firms == 0 || self.d_ch == 0 || self.min_quarters == 0 {
            return Err(Error::invalid("n_firms, d_ch and min_quarters must be positive"));
        }
        if self.max_quarters < self.min_quarters || self.max_quarters > self.horizon {
            return Err(Error::invalid("need min_quarters <= max_quarters <= horizon"));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) || !(0.0..1.0).contains(&self.missing_prob) {
            return Err(Error::invalid("dropout_prob and missing_prob must be in [0, 1)"));
        }
        if self.text_signal_dims + self.marker_dims > self.d_ch {
            return Err(Error::invalid("text_signal_dims + marker_dims exceeds d_ch"));
        }
        Ok(())
    }

    pub fn feature_names() -> Vec<String> {
        FINANCIAL_FEATURES
            .iter()
            .chain(MACRO_FEATURES.iter())
            .map(|s| s.to_string())
            .collect()
    }
}

/// Generates a dataset; `seed` overrides `config.seed`.
pub fn synthesize(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let root = SeededRng::new(seed);
    let mut macro_rng = root.derive(0);
    let mut rng = root.derive(1);

    // Shared macro paths, AR(1) over the calendar.
    let macro_path: Vec<[f64; 2]> = {
        let mut v = [0.0; 2];
        (0..=config.horizon)
            .map(|_| {
                for x in &mut v {
                    *x = 0.8 * *x + 0.6 * macro_rng.normal();
                }
                v
            })
            .collect()
    };

    let nfin = FINANCIAL_FEATURES.len();
    let nf = nfin + MACRO_FEATURES.len();
    let d = config.d_ch;
    let mut samples = Vec::with_capacity(config.n_firms);

    for i in 0..config.n_firms {
        let label = Label::ALL[rng.categorical(&config.priors)];
        let len = config.min_quarters + rng.below(config.max_quarters - config.min_quarters + 1);
        let start = 1 + rng.below(config.horizon - len + 1);
        let level: Vec<f64> = (0..nfin).map(|_| config.firm_noise * rng.normal()).collect();

        let mut steps = Vec::with_capacity(len);
        for g in 0..len {
            let interior = g > 0 && g + 1 < len;
            let dropped = interior && rng.bernoulli(config.dropout_prob);
            // Draws happen for dropped quarters too so the stream does not
            // depend on which quarters survive.
            let mut features: Vec<f64> = level
                .iter()
                .map(|l| l + config.step_noise * rng.normal())
                .collect();
            let quarter = start + g;
            for m in macro_path[quarter] {
                features.push(m + 0.05 * rng.normal());
            }

            let from_end = len - g;
            if from_end <= config.signal_quarters {
                let ramp = (config.signal_quarters - from_end + 1) as f64 / config.signal_quarters as f64;
                match label {
                    Label::Extended => features[STD_IDX] += config.extended_amplitude * ramp,
                    Label::Defaulted => {
                        for j in CF_IDX {
                            features[j] -= config.default_amplitude * ramp;
                        }
                    }
                    Label::Performing => {}
                }
            }

            let mut observed = vec![true; nf];
            for (j, o) in observed.iter_mut().enumerate() {
                if rng.bernoulli(config.missing_prob) {
                    *o = false;
                    features[j] = f64::NAN;
                }
            }
            if !dropped {
                steps.push(Step {
                    quarter: quarter as i64,
                    features,
                    delta_t: 0.0,
                    observed,
                });
            }
        }

        let notice: Vec<f64> = (0..d).map(|_| config.notice_noise * rng.normal()).collect();
        let mut risk: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for v in &mut risk[d - config.marker_dims..] {
            *v += config.risk_marker;
        }
        if label == Label::Defaulted {
            for v in &mut risk[..config.text_signal_dims] {
                *v += config.text_shift;
            }
        }

        let mut series = FirmSeries {
            firm_id: format!("F{i:05}"),
            steps,
        };
        series.recompute_deltas();
        samples.push(Sample {
            series,
            text: TextFeatures { notice, risk },
            label,
            synthetic: false,
        });
    }

    Ok(Dataset {
        samples,
        feature_names: SynthConfig::feature_names(),
        d_ch: d,
    })
}
