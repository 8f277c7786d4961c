//! Quantile-norming mitigation: replace each disadvantaged-group score with
//! the advantaged group's score at the corresponding quantile rank. The
//! mapping is rank-preserving, leaves the advantaged group untouched, and is
//! idempotent; it is applied only on explicit operator request, never
//! automatically on an alert.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::PredictionEvent;
use crate::metrics::{GroupKey, ScoreSample};

#[derive(Debug, Error, PartialEq)]
pub enum MitigationError {
    #[error("mitigation map references unknown event {event_id}")]
    UnknownEventId { event_id: String },
}

/// One score substitution, keyed by event id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MitigationEntry {
    pub event_id: String,
    pub original_score: f64,
    pub mitigated_score: f64,
}

/// Rank-to-score substitution table produced by quantile norming, ordered by
/// ascending original score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MitigationMap {
    pub entries: Vec<MitigationEntry>,
    /// The group whose scores are replaced.
    pub direction: GroupKey,
}

impl MitigationMap {
    /// Audit view: `event_id,original_score,mitigated_score` with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("event_id,original_score,mitigated_score\n");
        for entry in &self.entries {
            out.push_str(&format!(
                "{},{},{}\n",
                entry.event_id, entry.original_score, entry.mitigated_score
            ));
        }
        out
    }
}

/// The group with the lower sample mean; ties go to the target group. An
/// operator override, when configured, takes precedence over this choice.
pub fn select_disadvantaged<'a>(
    target: &'a ScoreSample,
    reference: &'a ScoreSample,
) -> &'a GroupKey {
    if target.mean() <= reference.mean() {
        target.group()
    } else {
        reference.group()
    }
}

/// Build the substitution map: the disadvantaged sample's rank `r` of `n_d`
/// maps to the advantaged sample's nearest-rank quantile at `r/n_d`. Equal
/// sizes reduce to direct rank-for-rank substitution.
pub fn quantile_norm(disadvantaged: &ScoreSample, advantaged: &ScoreSample) -> MitigationMap {
    let disadvantaged = disadvantaged.clone().canonicalize();
    let advantaged = advantaged.clone().canonicalize();
    let n_d = disadvantaged.len();
    let n_a = advantaged.len();
    let entries = (0..n_d)
        .map(|i| {
            let rank = i + 1;
            let a_idx = (rank * n_a).div_ceil(n_d) - 1;
            MitigationEntry {
                event_id: disadvantaged.event_ids()[i].clone(),
                original_score: disadvantaged.scores()[i],
                mitigated_score: advantaged.scores()[a_idx],
            }
        })
        .collect();
    MitigationMap {
        entries,
        direction: disadvantaged.group().clone(),
    }
}

/// Replace scores for mapped events only; all other fields stay untouched.
/// When a substitution actually changes the score, the previous value is
/// recorded in the event's `original_score` audit field, so re-applying an
/// identity map leaves the file byte-identical.
pub fn apply_mitigation(
    events: &[PredictionEvent],
    map: &MitigationMap,
) -> Result<Vec<PredictionEvent>, MitigationError> {
    let mut index: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for (i, event) in events.iter().enumerate() {
        index.insert(event.event_id.as_str(), i);
    }
    let mut out = events.to_vec();
    for entry in &map.entries {
        let &i = index
            .get(entry.event_id.as_str())
            .ok_or_else(|| MitigationError::UnknownEventId {
                event_id: entry.event_id.clone(),
            })?;
        if out[i].score != entry.mitigated_score {
            out[i].original_score = Some(out[i].score);
            out[i].score = entry.mitigated_score;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::qdd_per_bin;
    use std::collections::BTreeMap;

    fn sample(scores: &[f64], group_value: &str) -> ScoreSample {
        ScoreSample::from_scores(scores.to_vec(), GroupKey::new("g", group_value).unwrap())
            .unwrap()
    }

    #[test]
    fn selects_lower_mean_group() {
        let low = sample(&[10.0], "low");
        let high = sample(&[20.0], "high");
        assert_eq!(select_disadvantaged(&low, &high).value, "low");
        assert_eq!(select_disadvantaged(&high, &low).value, "low");
        // ties go to the target (first) group
        let a = sample(&[15.0], "a");
        let b = sample(&[15.0], "b");
        assert_eq!(select_disadvantaged(&a, &b).value, "a");
    }

    #[test]
    fn equal_sizes_substitute_rank_for_rank() {
        let d = sample(&[1.0, 2.0, 3.0], "d");
        let a = sample(&[4.0, 5.0, 6.0], "a");
        let map = quantile_norm(&d, &a);
        let mitigated: Vec<f64> = map.entries.iter().map(|e| e.mitigated_score).collect();
        assert_eq!(mitigated, vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn self_norming_is_identity() {
        let d = sample(&[1.0, 5.0, 9.0], "d");
        let map = quantile_norm(&d, &d);
        for entry in &map.entries {
            assert_eq!(entry.original_score, entry.mitigated_score);
        }
    }

    #[test]
    fn post_mitigation_qdd_is_exactly_zero_for_equal_sizes() {
        let d = sample(&[1.0, 2.0, 3.0, 4.0], "d");
        let a = sample(&[10.0, 20.0, 30.0, 40.0], "a");
        let map = quantile_norm(&d, &a);
        let mitigated = ScoreSample::new(
            map.entries.iter().map(|e| e.mitigated_score).collect(),
            map.entries.iter().map(|e| e.event_id.clone()).collect(),
            d.group().clone(),
        )
        .unwrap();
        for bins in 1..=4 {
            let report = qdd_per_bin(&mitigated, &a, bins).unwrap();
            assert!(report.per_bin_qdd.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn rank_preservation_and_idempotence_with_unequal_sizes() {
        let d = sample(&[1.0, 2.0, 3.0, 4.0, 5.0], "d");
        let a = sample(&[10.0, 20.0, 30.0], "a");
        let map = quantile_norm(&d, &a);
        let mitigated: Vec<f64> = map.entries.iter().map(|e| e.mitigated_score).collect();
        // non-decreasing in original-score rank
        assert!(mitigated.windows(2).all(|w| w[0] <= w[1]));
        // every mitigated score is an observed advantaged score
        assert!(mitigated.iter().all(|s| a.scores().contains(s)));
        // re-norming the mitigated sample against the same advantaged sample
        // is the identity
        let mitigated_sample = ScoreSample::new(
            mitigated.clone(),
            map.entries.iter().map(|e| e.event_id.clone()).collect(),
            d.group().clone(),
        )
        .unwrap();
        let again = quantile_norm(&mitigated_sample, &a);
        for entry in &again.entries {
            assert_eq!(entry.original_score, entry.mitigated_score);
        }
    }

    fn toy_event(id: &str, score: f64) -> PredictionEvent {
        PredictionEvent {
            event_id: id.into(),
            ts_ms: 0,
            score,
            groups: BTreeMap::new(),
            features: BTreeMap::new(),
            attribution: None,
            label: None,
            original_score: None,
        }
    }

    #[test]
    fn apply_replaces_mapped_scores_only() {
        let events = vec![toy_event("a", 1.0), toy_event("b", 2.0)];
        let map = MitigationMap {
            entries: vec![MitigationEntry {
                event_id: "a".into(),
                original_score: 1.0,
                mitigated_score: 5.0,
            }],
            direction: GroupKey::new("g", "d").unwrap(),
        };
        let out = apply_mitigation(&events, &map).unwrap();
        assert_eq!(out[0].score, 5.0);
        assert_eq!(out[0].original_score, Some(1.0));
        assert_eq!(out[1], events[1]);

        let empty = MitigationMap {
            entries: vec![],
            direction: GroupKey::new("g", "d").unwrap(),
        };
        assert_eq!(apply_mitigation(&events, &empty).unwrap(), events);

        let unknown = MitigationMap {
            entries: vec![MitigationEntry {
                event_id: "zz".into(),
                original_score: 0.0,
                mitigated_score: 0.0,
            }],
            direction: GroupKey::new("g", "d").unwrap(),
        };
        assert_eq!(
            apply_mitigation(&events, &unknown).unwrap_err(),
            MitigationError::UnknownEventId {
                event_id: "zz".into()
            }
        );
    }
}
