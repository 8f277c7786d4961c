//! Per-feature explanations for per-bin QDD.
//!
//! Each prediction already carries a per-feature attribution satisfying the
//! efficiency axiom (attributions sum to prediction minus baseline
//! prediction). Differencing the two groups' mean attributions bin by bin
//! decomposes each bin's QDD across features exactly, so explaining a new
//! group pairing never recomputes attributions: the per-event table built
//! once per window is reused for every pairing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::PredictionEvent;
use crate::metrics::{MetricsError, QddReport};

/// Relative tolerance for the efficiency axiom; loose enough for approximate
/// Shapley estimators, tight enough to catch schema errors.
pub const EFFICIENCY_REL_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("event {event_id} has no attribution record")]
    MissingAttribution { event_id: String },
    #[error("mixed attribution methods: {first} vs {second} (event {event_id})")]
    MixedMethods {
        first: String,
        second: String,
        event_id: String,
    },
    #[error("mixed baselines: {first} vs {second} (event {event_id})")]
    MixedBaselines {
        first: f64,
        second: f64,
        event_id: String,
    },
    #[error("event {event_id} is missing attribution for feature {feature}")]
    FeatureMismatch { event_id: String, feature: String },
    #[error("feature {feature} absent from input")]
    MissingFeature { feature: String },
    #[error("reports do not match: {reason}")]
    MismatchedReports { reason: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One prediction's feature attribution, in model-output units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub event_id: String,
    pub per_feature_attribution: BTreeMap<String, f64>,
    pub baseline_prediction: f64,
    pub method_tag: String,
}

/// Outcome of an efficiency check: the absolute residual between the
/// attribution sum and (prediction - baseline), and whether it is within
/// tolerance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EfficiencyCheck {
    pub residual: f64,
    pub pass: bool,
}

/// Diagnostic: |sum of attributions - (prediction - baseline)|, passing iff
/// within `EFFICIENCY_REL_TOL` relative to max(1, |prediction - baseline|).
pub fn check_efficiency(record: &AttributionRecord, prediction: f64) -> EfficiencyCheck {
    let total: f64 = record.per_feature_attribution.values().sum();
    let expected = prediction - record.baseline_prediction;
    let residual = (total - expected).abs();
    let pass = residual <= EFFICIENCY_REL_TOL * expected.abs().max(1.0);
    EfficiencyCheck { residual, pass }
}

/// Exact attributor for linear models: attr_f = coef_f * (x_f - baseline_f).
/// Efficiency holds to machine precision, which makes the QDD decomposition
/// verifiable end to end.
#[derive(Clone, Debug)]
pub struct LinearAttributor {
    coefficients: BTreeMap<String, f64>,
    intercept: f64,
    baseline_input: BTreeMap<String, f64>,
    baseline_prediction: f64,
}

pub const LINEAR_EXACT_METHOD: &str = "linear-exact";

impl LinearAttributor {
    pub fn new(
        coefficients: BTreeMap<String, f64>,
        intercept: f64,
        baseline_input: BTreeMap<String, f64>,
    ) -> Result<Self, ExplainError> {
        for feature in coefficients.keys() {
            if !baseline_input.contains_key(feature) {
                return Err(ExplainError::MissingFeature {
                    feature: feature.clone(),
                });
            }
        }
        let baseline_prediction = intercept
            + coefficients
                .iter()
                .map(|(f, c)| c * baseline_input[f])
                .sum::<f64>();
        Ok(LinearAttributor {
            coefficients,
            intercept,
            baseline_input,
            baseline_prediction,
        })
    }

    pub fn baseline_prediction(&self) -> f64 {
        self.baseline_prediction
    }

    pub fn predict(&self, features: &BTreeMap<String, f64>) -> Result<f64, ExplainError> {
        let mut score = self.intercept;
        for (feature, coef) in &self.coefficients {
            let x = features.get(feature).ok_or_else(|| ExplainError::MissingFeature {
                feature: feature.clone(),
            })?;
            score += coef * x;
        }
        Ok(score)
    }

    pub fn attribute(
        &self,
        event_id: &str,
        features: &BTreeMap<String, f64>,
    ) -> Result<AttributionRecord, ExplainError> {
        let mut values = BTreeMap::new();
        for (feature, coef) in &self.coefficients {
            let x = features.get(feature).ok_or_else(|| ExplainError::MissingFeature {
                feature: feature.clone(),
            })?;
            values.insert(feature.clone(), coef * (x - self.baseline_input[feature]));
        }
        Ok(AttributionRecord {
            event_id: event_id.to_string(),
            per_feature_attribution: values,
            baseline_prediction: self.baseline_prediction,
            method_tag: LINEAR_EXACT_METHOD.to_string(),
        })
    }
}

/// Per-bin, per-feature attribution differences explaining a QDD report.
/// `per_bin_per_feature[b][f]` follows the order of `features`; adding the
/// bin's residual reconstructs the bin's QDD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QddaReport {
    pub features: Vec<String>,
    pub per_bin_per_feature: Vec<Vec<f64>>,
    pub method_tag: String,
    pub residual_per_bin: Vec<f64>,
    pub bin_count: usize,
}

impl QddaReport {
    /// Total |QDDA| mass per feature, summed over bins, in feature order.
    pub fn total_abs_per_feature(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.features.len()];
        for row in &self.per_bin_per_feature {
            for (t, v) in totals.iter_mut().zip(row) {
                *t += v.abs();
            }
        }
        totals
    }

    /// Features ranked by total |QDDA|, descending, ties broken by name.
    pub fn top_features(&self, k: usize) -> Vec<(String, f64)> {
        let totals = self.total_abs_per_feature();
        let mut ranked: Vec<(String, f64)> = self
            .features
            .iter()
            .cloned()
            .zip(totals)
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }
}

/// Dense per-event attribution table for one window, built once and reused
/// for every group pairing. Row `i` holds the attributions of event `i` in
/// feature order.
pub struct AttributionCache {
    features: Vec<String>,
    rows: Vec<f64>, // events.len() x features.len(), row-major
    scores: Vec<f64>,
    /// All event indices sorted by (score, event_id), computed once so each
    /// pairing extracts its ranking with a linear scan instead of a sort.
    canonical: Vec<usize>,
    baseline_prediction: f64,
    method_tag: String,
}

impl AttributionCache {
    pub fn build(events: &[&PredictionEvent]) -> Result<Self, ExplainError> {
        let first = events
            .iter()
            .find_map(|e| e.attribution.as_ref().map(|a| (e, a)))
            .ok_or_else(|| ExplainError::MissingAttribution {
                event_id: events.first().map(|e| e.event_id.clone()).unwrap_or_default(),
            })?;
        let method_tag = first.1.method.clone();
        let baseline_prediction = first.1.baseline_prediction;
        let features: Vec<String> = first.1.values.keys().cloned().collect();

        let mut rows = Vec::with_capacity(events.len() * features.len());
        let mut scores = Vec::with_capacity(events.len());
        let mut event_ids = Vec::with_capacity(events.len());
        for event in events {
            let attribution =
                event
                    .attribution
                    .as_ref()
                    .ok_or_else(|| ExplainError::MissingAttribution {
                        event_id: event.event_id.clone(),
                    })?;
            if attribution.method != method_tag {
                return Err(ExplainError::MixedMethods {
                    first: method_tag.clone(),
                    second: attribution.method.clone(),
                    event_id: event.event_id.clone(),
                });
            }
            if attribution.baseline_prediction != baseline_prediction {
                return Err(ExplainError::MixedBaselines {
                    first: baseline_prediction,
                    second: attribution.baseline_prediction,
                    event_id: event.event_id.clone(),
                });
            }
            if attribution.values.len() != features.len() {
                let missing = features
                    .iter()
                    .find(|f| !attribution.values.contains_key(*f))
                    .cloned()
                    .unwrap_or_else(|| attribution.values.keys().next().cloned().unwrap_or_default());
                return Err(ExplainError::FeatureMismatch {
                    event_id: event.event_id.clone(),
                    feature: missing,
                });
            }
            for feature in &features {
                let v = attribution.values.get(feature).ok_or_else(|| {
                    ExplainError::FeatureMismatch {
                        event_id: event.event_id.clone(),
                        feature: feature.clone(),
                    }
                })?;
                rows.push(*v);
            }
            scores.push(event.score);
            event_ids.push(event.event_id.clone());
        }
        let mut canonical: Vec<usize> = (0..scores.len()).collect();
        canonical.sort_by(|&a, &b| {
            scores[a]
                .total_cmp(&scores[b])
                .then_with(|| event_ids[a].cmp(&event_ids[b]))
        });
        Ok(AttributionCache {
            features,
            rows,
            scores,
            canonical,
            baseline_prediction,
            method_tag,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn baseline_prediction(&self) -> f64 {
        self.baseline_prediction
    }

    /// QDDA between two index subsets of the cached window, binned by score
    /// rank exactly as per-bin QDD.
    pub fn qdda_between(
        &self,
        target: &[usize],
        reference: &[usize],
        bins: usize,
    ) -> Result<QddaReport, ExplainError> {
        let target_order = self.sorted_order(target)?;
        let reference_order = self.sorted_order(reference)?;
        let target_ranges = split_ranges(target_order.len(), bins)?;
        let reference_ranges = split_ranges(reference_order.len(), bins)?;

        let f = self.features.len();
        let mut per_bin_per_feature = Vec::with_capacity(bins);
        let mut residual_per_bin = Vec::with_capacity(bins);
        for b in 0..bins {
            let t_slice = &target_order[target_ranges[b].0..target_ranges[b].1];
            let r_slice = &reference_order[reference_ranges[b].0..reference_ranges[b].1];
            let mut row = Vec::with_capacity(f);
            for col in 0..f {
                let t_mean = self.column_mean(t_slice, col);
                let r_mean = self.column_mean(r_slice, col);
                row.push(t_mean - r_mean);
            }
            // residual against the bin's QDD computed from the same ranking
            let qdd_b = self.score_mean(t_slice) - self.score_mean(r_slice);
            let explained: f64 = row.iter().sum();
            residual_per_bin.push(qdd_b - explained);
            per_bin_per_feature.push(row);
        }
        Ok(QddaReport {
            features: self.features.clone(),
            per_bin_per_feature,
            method_tag: self.method_tag.clone(),
            residual_per_bin,
            bin_count: bins,
        })
    }

    fn sorted_order(&self, subset: &[usize]) -> Result<Vec<usize>, ExplainError> {
        if subset.is_empty() {
            return Err(MetricsError::EmptySample.into());
        }
        let mut member = vec![false; self.scores.len()];
        for &i in subset {
            member[i] = true;
        }
        let order: Vec<usize> = self
            .canonical
            .iter()
            .copied()
            .filter(|&i| member[i])
            .collect();
        Ok(order)
    }

    fn column_mean(&self, order: &[usize], col: usize) -> f64 {
        let f = self.features.len();
        let values: Vec<f64> = order.iter().map(|&i| self.rows[i * f + col]).collect();
        crate::metrics::mean(&values)
    }

    fn score_mean(&self, order: &[usize]) -> f64 {
        let values: Vec<f64> = order.iter().map(|&i| self.scores[i]).collect();
        crate::metrics::mean(&values)
    }
}

fn split_ranges(len: usize, bins: usize) -> Result<Vec<(usize, usize)>, ExplainError> {
    if bins < 1 {
        return Err(MetricsError::InvalidBinCount { got: bins }.into());
    }
    if bins > len {
        return Err(MetricsError::TooManyBins { bins, len }.into());
    }
    let base = len / bins;
    let remainder = len % bins;
    let mut ranges = Vec::with_capacity(bins);
    let mut start = 0;
    for b in 0..bins {
        let size = base + usize::from(b < remainder);
        ranges.push((start, start + size));
        start += size;
    }
    Ok(ranges)
}

/// Per-feature QDDA between target and reference events. Every event must
/// carry an attribution with one shared method tag and baseline; the result
/// depends on attribution values only, never on the tag.
pub fn qdda(
    target_events: &[&PredictionEvent],
    reference_events: &[&PredictionEvent],
    bins: usize,
) -> Result<QddaReport, ExplainError> {
    let mut all: Vec<&PredictionEvent> = Vec::with_capacity(target_events.len() + reference_events.len());
    all.extend_from_slice(target_events);
    all.extend_from_slice(reference_events);
    let cache = AttributionCache::build(&all)?;
    let target_idx: Vec<usize> = (0..target_events.len()).collect();
    let reference_idx: Vec<usize> =
        (target_events.len()..target_events.len() + reference_events.len()).collect();
    cache.qdda_between(&target_idx, &reference_idx, bins)
}

/// Residuals QDD_b - sum_f QDDA[b][f] between two reports produced from the
/// same inputs and binning.
pub fn reconcile(qdda: &QddaReport, qdd: &QddReport) -> Result<Vec<f64>, ExplainError> {
    if qdda.bin_count != qdd.bin_count {
        return Err(ExplainError::MismatchedReports {
            reason: format!(
                "bin counts differ ({} vs {})",
                qdda.bin_count, qdd.bin_count
            ),
        });
    }
    Ok(qdd
        .per_bin_qdd
        .iter()
        .zip(&qdda.per_bin_per_feature)
        .map(|(qdd_b, row)| qdd_b - row.iter().sum::<f64>())
        .collect())
}
