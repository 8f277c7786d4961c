//! Conventional threshold fairness metrics for side-by-side comparison:
//! statistical parity difference and disparate impact, plus the UGESP
//! four-fifths alert rule. A score passes when it is at or above the
//! threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::ScoreSample;

/// Four-fifths band: DI outside [0.8, 1.25] is flagged.
pub const FOUR_FIFTHS_LOWER: f64 = 0.8;
pub const FOUR_FIFTHS_UPPER: f64 = 1.25;
/// SPD flag threshold (20%, consistent with the four-fifths rule).
pub const SPD_LIMIT: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum ThresholdError {
    #[error("threshold list is empty")]
    NoThresholds,
}

/// Which alert rules fired for one threshold row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleFlags {
    pub di: bool,
    pub spd: bool,
}

impl RuleFlags {
    pub fn any(&self) -> bool {
        self.di || self.spd
    }
}

/// SPD and DI at one decision threshold. `di` is `None` when the privileged
/// pass rate is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetricRow {
    pub threshold: f64,
    pub spd: f64,
    pub di: Option<f64>,
    pub flags: RuleFlags,
}

fn pass_rate(sample: &ScoreSample, threshold: f64) -> f64 {
    let passed = sample.scores().iter().filter(|&&s| s >= threshold).count();
    passed as f64 / sample.len() as f64
}

/// Statistical parity difference: privileged pass rate minus unprivileged
/// pass rate.
pub fn spd(privileged: &ScoreSample, unprivileged: &ScoreSample, threshold: f64) -> f64 {
    pass_rate(privileged, threshold) - pass_rate(unprivileged, threshold)
}

/// Disparate impact: unprivileged pass rate over privileged pass rate, so
/// values below 1 disadvantage the unprivileged group. Undefined when the
/// privileged pass rate is zero.
pub fn di(privileged: &ScoreSample, unprivileged: &ScoreSample, threshold: f64) -> Option<f64> {
    let p_priv = pass_rate(privileged, threshold);
    if p_priv == 0.0 {
        return None;
    }
    Some(pass_rate(unprivileged, threshold) / p_priv)
}

/// Apply the four-fifths rule: DI flagged outside [0.8, 1.25], SPD flagged
/// when |SPD| exceeds 20%. An undefined DI is never flagged.
pub fn four_fifths_flags(spd: f64, di: Option<f64>) -> RuleFlags {
    RuleFlags {
        di: di.is_some_and(|d| !(FOUR_FIFTHS_LOWER..=FOUR_FIFTHS_UPPER).contains(&d)),
        spd: spd.abs() > SPD_LIMIT,
    }
}

/// One metric row per threshold, in input order.
pub fn threshold_sweep(
    privileged: &ScoreSample,
    unprivileged: &ScoreSample,
    thresholds: &[f64],
) -> Result<Vec<ThresholdMetricRow>, ThresholdError> {
    if thresholds.is_empty() {
        return Err(ThresholdError::NoThresholds);
    }
    Ok(thresholds
        .iter()
        .map(|&threshold| {
            let spd_value = spd(privileged, unprivileged, threshold);
            let di_value = di(privileged, unprivileged, threshold);
            ThresholdMetricRow {
                threshold,
                spd: spd_value,
                di: di_value,
                flags: four_fifths_flags(spd_value, di_value),
            }
        })
        .collect())
}
