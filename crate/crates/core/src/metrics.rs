//! Quantile demographic disparity over immutable score samples.
//!
//! A sample is segmented into `B` equal-count quantile bins; the per-bin
//! disparity between a target and a reference group is the difference of the
//! two bins' mean scores, in the units of the model output. All operations
//! are pure functions of their inputs and canonicalize internally, so any
//! reordering of the input events yields bit-identical reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::PredictionEvent;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("scores and event_ids differ in length ({scores} vs {ids})")]
    LengthMismatch { scores: usize, ids: usize },
    #[error("non-finite score for event {event_id}")]
    NonFiniteScore { event_id: String },
    #[error("bin count must be at least 1, got {got}")]
    InvalidBinCount { got: usize },
    #[error("bin count {bins} exceeds sample size {len}")]
    TooManyBins { bins: usize, len: usize },
    #[error("condition empties the {group} group")]
    ConditionEmptiesGroup { group: String },
    #[error("reports do not match: {reason}")]
    MismatchedReports { reason: String },
    #[error("samples differ in size ({left} vs {right})")]
    UnequalSizes { left: usize, right: usize },
    #[error("group attribute name is empty")]
    EmptyAttributeName,
    #[error("duplicate conditioning attribute {name}")]
    DuplicateCondition { name: String },
}

/// Identifies a (possibly conditioned) group: a protected attribute name,
/// the value that selects the group, and optional conditioning pairs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupKey {
    pub attribute: String,
    pub value: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub conditions: BTreeMap<String, String>,
}

impl GroupKey {
    pub fn new(attribute: impl Into<String>, value: impl Into<String>) -> Result<Self, MetricsError> {
        let attribute = attribute.into();
        if attribute.is_empty() {
            return Err(MetricsError::EmptyAttributeName);
        }
        Ok(GroupKey {
            attribute,
            value: value.into(),
            conditions: BTreeMap::new(),
        })
    }

    pub fn with_conditions(
        mut self,
        pairs: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, MetricsError> {
        for (name, value) in pairs {
            if name.is_empty() {
                return Err(MetricsError::EmptyAttributeName);
            }
            if self.conditions.insert(name.clone(), value).is_some() {
                return Err(MetricsError::DuplicateCondition { name });
            }
        }
        Ok(self)
    }

    /// True when `event` belongs to this group, including any conditions.
    pub fn contains(&self, event: &PredictionEvent) -> bool {
        event.matches(&self.attribute, &self.value) && event.matches_all(&self.conditions)
    }
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}={}", self.attribute, self.value)?;
        for (k, v) in &self.conditions {
            write!(f, "|{k}={v}")?;
        }
        Ok(())
    }
}

/// An immutable sample of prediction scores for one group.
///
/// Canonical form is sorted ascending by score with ties broken by event id,
/// which makes every downstream report independent of input order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSample {
    scores: Vec<f64>,
    event_ids: Vec<String>,
    group: GroupKey,
    canonical: bool,
}

impl ScoreSample {
    pub fn new(
        scores: Vec<f64>,
        event_ids: Vec<String>,
        group: GroupKey,
    ) -> Result<Self, MetricsError> {
        if scores.len() != event_ids.len() {
            return Err(MetricsError::LengthMismatch {
                scores: scores.len(),
                ids: event_ids.len(),
            });
        }
        if scores.is_empty() {
            return Err(MetricsError::EmptySample);
        }
        for (s, id) in scores.iter().zip(&event_ids) {
            if !s.is_finite() {
                return Err(MetricsError::NonFiniteScore {
                    event_id: id.clone(),
                });
            }
        }
        let canonical = is_sorted(&scores, &event_ids);
        Ok(ScoreSample {
            scores,
            event_ids,
            group,
            canonical,
        })
    }

    /// Convenience constructor that synthesizes positional event ids; useful
    /// for tests and the bindings layer where only scores matter.
    pub fn from_scores(scores: Vec<f64>, group: GroupKey) -> Result<Self, MetricsError> {
        let ids = (0..scores.len()).map(|i| format!("s{i:06}")).collect();
        ScoreSample::new(scores, ids, group)
    }

    /// Sort ascending by score, ties broken by event id. Idempotent: an
    /// already-canonical sample is returned unchanged.
    pub fn canonicalize(self) -> ScoreSample {
        if self.canonical {
            return self;
        }
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[a]
                .total_cmp(&self.scores[b])
                .then_with(|| self.event_ids[a].cmp(&self.event_ids[b]))
        });
        let scores = order.iter().map(|&i| self.scores[i]).collect();
        let event_ids = order.iter().map(|&i| self.event_ids[i].clone()).collect();
        ScoreSample {
            scores,
            event_ids,
            group: self.group,
            canonical: true,
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn event_ids(&self) -> &[String] {
        &self.event_ids
    }

    pub fn group(&self) -> &GroupKey {
        &self.group
    }

    pub fn mean(&self) -> f64 {
        mean(&self.scores)
    }
}

fn is_sorted(scores: &[f64], ids: &[String]) -> bool {
    scores.windows(2).zip(ids.windows(2)).all(|(s, i)| {
        match s[0].total_cmp(&s[1]) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Equal => i[0] <= i[1],
            std::cmp::Ordering::Greater => false,
        }
    })
}

/// Neumaier-compensated sum; windows hold tens of thousands of scores and
/// bin means must stay reproducible to the last bit.
pub(crate) fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    compensated_sum(values) / values.len() as f64
}

/// Equal-count segmentation of a sample into `bin_count` contiguous index
/// ranges over the canonical (sorted) order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantileBinning {
    pub bin_count: usize,
    /// Half-open `[start, end)` ranges, contiguous and covering `0..len`.
    pub ranges: Vec<(usize, usize)>,
}

/// Segment `sample` into `bins` equal-count quantile bins. When the size is
/// not divisible, the remainder goes to the lowest-score bins so bin sizes
/// differ by at most one.
pub fn quantile_bin(sample: &ScoreSample, bins: usize) -> Result<QuantileBinning, MetricsError> {
    bin_ranges(sample.len(), bins).map(|ranges| QuantileBinning {
        bin_count: bins,
        ranges,
    })
}

fn bin_ranges(len: usize, bins: usize) -> Result<Vec<(usize, usize)>, MetricsError> {
    if bins < 1 {
        return Err(MetricsError::InvalidBinCount { got: bins });
    }
    if bins > len {
        return Err(MetricsError::TooManyBins { bins, len });
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
    debug_assert_eq!(start, len);
    Ok(ranges)
}

/// Per-bin quantile demographic disparity between a target and a reference
/// group, in the units of the model's prediction scores. Positive means the
/// target group's bin mean exceeds the reference group's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QddReport {
    pub per_bin_qdd: Vec<f64>,
    pub target_group: GroupKey,
    pub reference_group: GroupKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_id: Option<String>,
    pub bin_count: usize,
}

impl QddReport {
    pub fn max_abs(&self) -> f64 {
        self.per_bin_qdd.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn with_window(mut self, window_id: impl Into<String>) -> Self {
        self.window_id = Some(window_id.into());
        self
    }
}

fn bin_means(sample: &ScoreSample, bins: usize) -> Result<Vec<f64>, MetricsError> {
    let ranges = bin_ranges(sample.len(), bins)?;
    let scores = sample.scores();
    Ok(ranges
        .iter()
        .map(|&(start, end)| mean(&scores[start..end]))
        .collect())
}

fn canonical_cow(sample: &ScoreSample) -> std::borrow::Cow<'_, ScoreSample> {
    if sample.is_canonical() {
        std::borrow::Cow::Borrowed(sample)
    } else {
        std::borrow::Cow::Owned(sample.clone().canonicalize())
    }
}

/// Per-bin QDD: mean of the target's bin minus mean of the reference's bin,
/// each group segmented independently by its own quantiles.
pub fn qdd_per_bin(
    target: &ScoreSample,
    reference: &ScoreSample,
    bins: usize,
) -> Result<QddReport, MetricsError> {
    let target = canonical_cow(target);
    let reference = canonical_cow(reference);
    let target_means = bin_means(&target, bins)?;
    let reference_means = bin_means(&reference, bins)?;
    let per_bin_qdd = target_means
        .iter()
        .zip(&reference_means)
        .map(|(t, r)| t - r)
        .collect();
    Ok(QddReport {
        per_bin_qdd,
        target_group: target.group().clone(),
        reference_group: reference.group().clone(),
        window_id: None,
        bin_count: bins,
    })
}

/// Build the score sample of all events belonging to `group`.
pub fn sample_for_group(
    events: &[PredictionEvent],
    group: &GroupKey,
) -> Result<ScoreSample, MetricsError> {
    let mut scores = Vec::new();
    let mut ids = Vec::new();
    for event in events {
        if group.contains(event) {
            scores.push(event.score);
            ids.push(event.event_id.clone());
        }
    }
    ScoreSample::new(scores, ids, group.clone())
}

/// QDD restricted to events matching every pair in `condition`. The error
/// names whichever group the condition empties.
pub fn conditional_qdd(
    events: &[PredictionEvent],
    condition: &BTreeMap<String, String>,
    target_group: &GroupKey,
    reference_group: &GroupKey,
    bins: usize,
) -> Result<QddReport, MetricsError> {
    let filtered: Vec<&PredictionEvent> = events
        .iter()
        .filter(|e| e.matches_all(condition))
        .collect();
    let build = |group: &GroupKey| -> Result<ScoreSample, MetricsError> {
        let mut scores = Vec::new();
        let mut ids = Vec::new();
        for event in &filtered {
            if group.contains(event) {
                scores.push(event.score);
                ids.push(event.event_id.clone());
            }
        }
        ScoreSample::new(scores, ids, group.clone()).map_err(|e| match e {
            MetricsError::EmptySample => MetricsError::ConditionEmptiesGroup {
                group: group.to_string(),
            },
            other => other,
        })
    };
    let target = build(target_group)?;
    let reference = build(reference_group)?;
    qdd_per_bin(&target, &reference, bins)
}

/// Largest absolute per-bin QDD between two sub-samples of the same parent
/// group. Absolute value, so a maximal negative disparity is not masked.
pub fn intra_group_bias(
    sub_target: &ScoreSample,
    sub_reference: &ScoreSample,
    bins: usize,
) -> Result<f64, MetricsError> {
    Ok(qdd_per_bin(sub_target, sub_reference, bins)?.max_abs())
}

/// Element-wise difference between a production QDD report and the training
/// base-rate report, bin by bin.
pub fn disparity_with_base_rate(
    production: &QddReport,
    training: &QddReport,
) -> Result<Vec<f64>, MetricsError> {
    if production.bin_count != training.bin_count {
        return Err(MetricsError::MismatchedReports {
            reason: format!(
                "bin counts differ ({} vs {})",
                production.bin_count, training.bin_count
            ),
        });
    }
    if production.target_group != training.target_group
        || production.reference_group != training.reference_group
    {
        return Err(MetricsError::MismatchedReports {
            reason: "groups differ".to_string(),
        });
    }
    Ok(production
        .per_bin_qdd
        .iter()
        .zip(&training.per_bin_qdd)
        .map(|(p, t)| p - t)
        .collect())
}

fn nearest_rank(scores: &[f64], rank: usize, out_of: usize) -> f64 {
    // 1-based nearest-rank quantile at rank/out_of
    let idx = (rank * scores.len()).div_ceil(out_of);
    scores[idx - 1]
}

/// Same-rank score differences between the two groups at
/// `n = min(N_target, N_reference)` nearest-rank quantiles. With equal sizes
/// this is exactly per-rank subtraction, the `B = N` case of per-bin QDD.
pub fn individual_alignment(
    target: &ScoreSample,
    reference: &ScoreSample,
) -> Result<Vec<f64>, MetricsError> {
    let target = canonical_cow(target);
    let reference = canonical_cow(reference);
    let n = target.len().min(reference.len());
    Ok((1..=n)
        .map(|r| {
            nearest_rank(target.scores(), r, n) - nearest_rank(reference.scores(), r, n)
        })
        .collect())
}

/// Exact Wasserstein-1 distance between equal-size empirical distributions:
/// the mean absolute difference of the sorted samples. Serves as the
/// independent oracle for per-bin QDD at `B = N`.
pub fn wasserstein1(a: &ScoreSample, b: &ScoreSample) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::UnequalSizes {
            left: a.len(),
            right: b.len(),
        });
    }
    let a = canonical_cow(a);
    let b = canonical_cow(b);
    let diffs: Vec<f64> = a
        .scores()
        .iter()
        .zip(b.scores())
        .map(|(x, y)| (x - y).abs())
        .collect();
    Ok(mean(&diffs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(value: &str) -> GroupKey {
        GroupKey::new("gender", value).unwrap()
    }

    fn sample(scores: &[f64], ids: &[&str]) -> ScoreSample {
        ScoreSample::new(
            scores.to_vec(),
            ids.iter().map(|s| s.to_string()).collect(),
            group("WOMAN"),
        )
        .unwrap()
    }

    #[test]
    fn canonicalize_sorts_by_score() {
        let s = sample(&[3.0, 1.0, 2.0], &["a", "b", "c"]).canonicalize();
        assert_eq!(s.scores(), &[1.0, 2.0, 3.0]);
        assert_eq!(s.event_ids(), &["b".to_string(), "c".into(), "a".into()]);
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let s = sample(&[1.0, 2.0, 3.0], &["a", "b", "c"]);
        assert!(s.is_canonical());
        let t = s.clone().canonicalize();
        assert_eq!(s, t);
    }

    #[test]
    fn canonicalize_breaks_ties_by_event_id() {
        let s = sample(&[2.0, 2.0], &["z", "a"]).canonicalize();
        assert_eq!(s.event_ids(), &["a".to_string(), "z".into()]);
    }

    #[test]
    fn empty_sample_is_rejected() {
        let err = ScoreSample::new(vec![], vec![], group("WOMAN")).unwrap_err();
        assert_eq!(err, MetricsError::EmptySample);
    }

    #[test]
    fn non_finite_score_is_rejected() {
        let err =
            ScoreSample::new(vec![f64::NAN], vec!["a".into()], group("WOMAN")).unwrap_err();
        assert!(matches!(err, MetricsError::NonFiniteScore { .. }));
    }

    #[test]
    fn single_bin_covers_sample() {
        let s = sample(&[1.0, 2.0, 3.0, 4.0], &["a", "b", "c", "d"]);
        let binning = quantile_bin(&s, 1).unwrap();
        assert_eq!(binning.ranges, vec![(0, 4)]);
    }

    #[test]
    fn remainder_goes_to_lowest_bins() {
        let s = sample(&[1.0, 2.0, 3.0, 4.0, 5.0], &["a", "b", "c", "d", "e"]);
        let binning = quantile_bin(&s, 2).unwrap();
        assert_eq!(binning.ranges, vec![(0, 3), (3, 5)]);
    }

    #[test]
    fn singleton_bins_when_bins_equal_len() {
        let s = sample(&[5.0, 1.0, 3.0], &["a", "b", "c"]);
        let binning = quantile_bin(&s, 3).unwrap();
        assert_eq!(binning.ranges, vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn bin_count_bounds() {
        let s = sample(&[1.0, 2.0], &["a", "b"]);
        assert_eq!(
            quantile_bin(&s, 0).unwrap_err(),
            MetricsError::InvalidBinCount { got: 0 }
        );
        assert_eq!(
            quantile_bin(&s, 3).unwrap_err(),
            MetricsError::TooManyBins { bins: 3, len: 2 }
        );
    }

    #[test]
    fn qdd_hand_example() {
        let t = sample(&[1.0, 2.0, 3.0, 4.0], &["a", "b", "c", "d"]);
        let r = ScoreSample::new(
            vec![2.0, 3.0, 4.0, 5.0],
            vec!["e".into(), "f".into(), "g".into(), "h".into()],
            group("MAN"),
        )
        .unwrap();
        let report = qdd_per_bin(&t, &r, 2).unwrap();
        assert_eq!(report.per_bin_qdd, vec![-1.0, -1.0]);
        assert_eq!(report.bin_count, 2);
    }

    #[test]
    fn qdd_identical_samples_is_exactly_zero() {
        let t = sample(&[3.5, 1.25, -2.0, 9.0], &["a", "b", "c", "d"]);
        for bins in 1..=4 {
            let report = qdd_per_bin(&t, &t, bins).unwrap();
            assert!(report.per_bin_qdd.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn qdd_ignores_input_order() {
        let t1 = sample(&[4.0, 1.0, 3.0, 2.0], &["d", "a", "c", "b"]);
        let t2 = sample(&[1.0, 2.0, 3.0, 4.0], &["a", "b", "c", "d"]);
        let r = ScoreSample::new(
            vec![5.0, 2.0, 4.0, 3.0],
            vec!["h".into(), "e".into(), "g".into(), "f".into()],
            group("MAN"),
        )
        .unwrap();
        let a = qdd_per_bin(&t1, &r, 2).unwrap();
        let b = qdd_per_bin(&t2, &r, 2).unwrap();
        assert_eq!(a.per_bin_qdd, b.per_bin_qdd);
    }

    #[test]
    fn intra_group_bias_examples() {
        let a = sample(&[1.0, 2.0, 3.0, 4.0], &["a", "b", "c", "d"]);
        let b = sample(&[2.0, 3.0, 4.0, 5.0], &["e", "f", "g", "h"]);
        assert_eq!(intra_group_bias(&a, &a, 2).unwrap(), 0.0);
        assert_eq!(intra_group_bias(&a, &b, 2).unwrap(), 1.0);
        let c = sample(&[0.0, 10.0], &["a", "b"]);
        let d = sample(&[0.0, 0.0], &["c", "d"]);
        assert_eq!(intra_group_bias(&c, &d, 2).unwrap(), 10.0);
    }

    #[test]
    fn base_rate_disparity_examples() {
        let mk = |values: Vec<f64>| QddReport {
            per_bin_qdd: values,
            target_group: group("WOMAN"),
            reference_group: group("MAN"),
            window_id: None,
            bin_count: 2,
        };
        let production = mk(vec![5.0, 3.0]);
        let training = mk(vec![2.0, 1.0]);
        assert_eq!(
            disparity_with_base_rate(&production, &training).unwrap(),
            vec![3.0, 2.0]
        );
        let zeros = mk(vec![0.0, 0.0]);
        assert_eq!(
            disparity_with_base_rate(&production, &zeros).unwrap(),
            production.per_bin_qdd
        );
        let other = QddReport {
            bin_count: 3,
            per_bin_qdd: vec![0.0; 3],
            ..mk(vec![])
        };
        assert!(matches!(
            disparity_with_base_rate(&production, &other),
            Err(MetricsError::MismatchedReports { .. })
        ));
    }

    #[test]
    fn alignment_equal_sizes_is_rank_subtraction() {
        let t = sample(&[1.0, 2.0, 3.0], &["a", "b", "c"]);
        let r = ScoreSample::new(
            vec![2.0, 3.0, 4.0],
            vec!["d".into(), "e".into(), "f".into()],
            group("MAN"),
        )
        .unwrap();
        assert_eq!(individual_alignment(&t, &r).unwrap(), vec![-1.0, -1.0, -1.0]);
        assert_eq!(individual_alignment(&t, &t).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn alignment_unequal_sizes_uses_nearest_rank() {
        let t = sample(&[1.0, 2.0, 3.0, 4.0], &["a", "b", "c", "d"]);
        let r = ScoreSample::new(
            vec![10.0, 20.0],
            vec!["e".into(), "f".into()],
            group("MAN"),
        )
        .unwrap();
        assert_eq!(individual_alignment(&t, &r).unwrap(), vec![-8.0, -16.0]);
    }

    #[test]
    fn wasserstein_examples() {
        let a = sample(&[0.0, 1.0], &["a", "b"]);
        let b = ScoreSample::new(vec![1.0, 2.0], vec!["c".into(), "d".into()], group("MAN"))
            .unwrap();
        assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
        assert_eq!(wasserstein1(&a, &b).unwrap(), 1.0);
        let c = sample(&[0.0, 1.0, 2.0], &["a", "b", "c"]);
        assert!(matches!(
            wasserstein1(&a, &c),
            Err(MetricsError::UnequalSizes { left: 2, right: 3 })
        ));
    }

    fn toy_event(id: &str, gender: &str, location: &str, score: f64) -> PredictionEvent {
        use crate::event::FeatureValue;
        PredictionEvent {
            event_id: id.into(),
            ts_ms: 0,
            score,
            groups: BTreeMap::from([("gender".to_string(), gender.to_string())]),
            features: BTreeMap::from([(
                "location".to_string(),
                FeatureValue::Text(location.to_string()),
            )]),
            attribution: None,
            label: None,
            original_score: None,
        }
    }

    #[test]
    fn conditional_qdd_matches_filter_then_average() {
        let events = vec![
            toy_event("e1", "WOMAN", "Springfield", 10.0),
            toy_event("e2", "WOMAN", "Springfield", 12.0),
            toy_event("e3", "WOMAN", "Centerville", 90.0),
            toy_event("e4", "MAN", "Springfield", 11.0),
            toy_event("e5", "MAN", "Springfield", 13.0),
            toy_event("e6", "MAN", "Springfield", 15.0),
            toy_event("e7", "MAN", "Centerville", 95.0),
            toy_event("e8", "WOMAN", "Centerville", 80.0),
        ];
        let condition =
            BTreeMap::from([("location".to_string(), "Springfield".to_string())]);
        let women = group("WOMAN");
        let men = GroupKey::new("gender", "MAN").unwrap();

        // brute-force oracle: filter, then average each group
        let brute = |value: &str| {
            let scores: Vec<f64> = events
                .iter()
                .filter(|e| {
                    e.features.get("location").and_then(|v| v.as_text())
                        == Some("Springfield")
                        && e.groups["gender"] == value
                })
                .map(|e| e.score)
                .collect();
            scores.iter().sum::<f64>() / scores.len() as f64
        };
        let expected = brute("WOMAN") - brute("MAN");

        let report = conditional_qdd(&events, &condition, &women, &men, 1).unwrap();
        assert!((report.per_bin_qdd[0] - expected).abs() < 1e-12);
        assert_eq!(expected, 11.0 - 13.0);
    }

    #[test]
    fn vacuous_condition_equals_unconditioned_qdd() {
        let events = vec![
            toy_event("e1", "WOMAN", "Springfield", 10.0),
            toy_event("e2", "WOMAN", "Centerville", 12.0),
            toy_event("e3", "MAN", "Springfield", 11.0),
            toy_event("e4", "MAN", "Centerville", 13.0),
        ];
        let women = group("WOMAN");
        let men = GroupKey::new("gender", "MAN").unwrap();
        let conditioned =
            conditional_qdd(&events, &BTreeMap::new(), &women, &men, 2).unwrap();
        let target = sample_for_group(&events, &women).unwrap();
        let reference = sample_for_group(&events, &men).unwrap();
        let unconditioned = qdd_per_bin(&target, &reference, 2).unwrap();
        assert_eq!(conditioned.per_bin_qdd, unconditioned.per_bin_qdd);
    }

    #[test]
    fn condition_emptying_a_group_names_it() {
        let events = vec![
            toy_event("e1", "WOMAN", "Centerville", 10.0),
            toy_event("e2", "MAN", "Springfield", 11.0),
        ];
        let condition =
            BTreeMap::from([("location".to_string(), "Springfield".to_string())]);
        let women = group("WOMAN");
        let men = GroupKey::new("gender", "MAN").unwrap();
        let err = conditional_qdd(&events, &condition, &women, &men, 1).unwrap_err();
        assert_eq!(
            err,
            MetricsError::ConditionEmptiesGroup {
                group: "gender=WOMAN".to_string()
            }
        );
    }

    #[test]
    fn wasserstein_matches_qdd_at_full_resolution() {
        let a = sample(&[3.0, -1.0, 7.0, 2.0], &["a", "b", "c", "d"]);
        let b = ScoreSample::new(
            vec![4.0, 0.0, 5.0, 2.5],
            vec!["e".into(), "f".into(), "g".into(), "h".into()],
            group("MAN"),
        )
        .unwrap();
        let report = qdd_per_bin(&a, &b, a.len()).unwrap();
        let mean_abs: f64 =
            report.per_bin_qdd.iter().map(|v| v.abs()).sum::<f64>() / a.len() as f64;
        let w1 = wasserstein1(&a, &b).unwrap();
        assert!((mean_abs - w1).abs() < 1e-12);
    }
}
