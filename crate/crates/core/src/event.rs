//! Prediction events and their NDJSON wire format.
//!
//! One event per line, fields: `event_id` (string), `ts_ms` (integer epoch
//! milliseconds UTC), `score` (number), `groups` (string -> string),
//! `features` (string -> number or string), optional `attribution`
//! (`values`, `baseline_prediction`, `method`), optional `label` (number).
//! `original_score` is written by mitigation as an audit field and accepted
//! back on ingestion.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::pipeline::PipelineError;

/// A feature value: numeric for model inputs, text for categorical fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Number(f64),
    Text(String),
}

impl FeatureValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            FeatureValue::Number(x) => Some(*x),
            FeatureValue::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            FeatureValue::Number(_) => None,
            FeatureValue::Text(s) => Some(s),
        }
    }
}

/// Per-prediction feature attribution as carried on the wire.
///
/// `values` are in model-output units; `baseline_prediction` is the model
/// output at the attribution baseline; `method` labels the attribution
/// method that produced the values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionData {
    pub values: BTreeMap<String, f64>,
    pub baseline_prediction: f64,
    pub method: String,
}

/// One scored instance observed by the monitor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionEvent {
    pub event_id: String,
    pub ts_ms: i64,
    pub score: f64,
    pub groups: BTreeMap<String, String>,
    pub features: BTreeMap<String, FeatureValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribution: Option<AttributionData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<f64>,
    /// Audit trail left by mitigation: the score before replacement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_score: Option<f64>,
}

impl PredictionEvent {
    /// True when this event carries `value` for `attribute`, looking first at
    /// group labels and then at categorical features.
    pub fn matches(&self, attribute: &str, value: &str) -> bool {
        if let Some(v) = self.groups.get(attribute) {
            return v == value;
        }
        match self.features.get(attribute) {
            Some(FeatureValue::Text(s)) => s == value,
            _ => false,
        }
    }

    /// True when every (name, value) pair in `condition` matches this event.
    pub fn matches_all(&self, condition: &BTreeMap<String, String>) -> bool {
        condition.iter().all(|(k, v)| self.matches(k, v))
    }
}

/// Parse newline-delimited JSON events. Blank lines are skipped; a malformed
/// line fails with its 1-based line number.
pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<PredictionEvent>, PipelineError> {
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(PipelineError::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let event: PredictionEvent =
            serde_json::from_str(&line).map_err(|e| PipelineError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        events.push(event);
    }
    Ok(events)
}

pub fn read_events_from_path(path: &std::path::Path) -> Result<Vec<PredictionEvent>, PipelineError> {
    let file = std::fs::File::open(path).map_err(PipelineError::Io)?;
    read_events(std::io::BufReader::new(file))
}

/// Write events as NDJSON, one per line, in the order given.
pub fn write_events<W: Write>(writer: &mut W, events: &[PredictionEvent]) -> std::io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut *writer, event)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_event() -> PredictionEvent {
        PredictionEvent {
            event_id: "e1".into(),
            ts_ms: 1000,
            score: 42.5,
            groups: BTreeMap::from([("gender".to_string(), "WOMAN".to_string())]),
            features: BTreeMap::from([
                ("location".to_string(), FeatureValue::Text("Springfield".into())),
                ("experience".to_string(), FeatureValue::Number(3.0)),
            ]),
            attribution: None,
            label: None,
            original_score: None,
        }
    }

    #[test]
    fn wire_roundtrip() {
        let event = toy_event();
        let line = serde_json::to_string(&event).unwrap();
        let back: PredictionEvent = serde_json::from_str(&line).unwrap();
        assert_eq!(event, back);
        // optional fields stay off the wire when absent
        assert!(!line.contains("attribution"));
        assert!(!line.contains("label"));
        assert!(!line.contains("original_score"));
    }

    #[test]
    fn matches_groups_then_categorical_features() {
        let event = toy_event();
        assert!(event.matches("gender", "WOMAN"));
        assert!(event.matches("location", "Springfield"));
        assert!(!event.matches("location", "Centerville"));
        // numeric features never match a string condition
        assert!(!event.matches("experience", "3"));
        assert!(!event.matches("missing", "x"));
    }

    #[test]
    fn parse_error_carries_line_number() {
        let data = "{\"event_id\":\"a\",\"ts_ms\":1,\"score\":1.0,\"groups\":{},\"features\":{}}\nnot json\n";
        let err = read_events(data.as_bytes()).unwrap_err();
        match err {
            PipelineError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn blank_lines_are_skipped() {
        let data = "\n{\"event_id\":\"a\",\"ts_ms\":1,\"score\":1.0,\"groups\":{},\"features\":{}}\n\n";
        let events = read_events(data.as_bytes()).unwrap();
        assert_eq!(events.len(), 1);
    }
}
