//! Monitor configuration: the groups under watch, binning and window
//! granularity, alert rules, and optional base-rate statistics. Read from a
//! JSON document; unknown keys are rejected so typos fail loudly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::GroupKey;
use crate::synthetic::ScenarioSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {reason}")]
    Invalid { reason: String },
}

/// Metrics an alert rule can watch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertMetric {
    /// Largest absolute per-bin QDD in the window.
    QddAbs,
    /// Largest absolute drift of per-bin QDD from the training base rate.
    BaseRateDisparityAbs,
    /// Disparate impact outside the [t, 1/t] band at any configured
    /// score threshold.
    DiFourFifths,
    /// |SPD| above the rule threshold at any configured score threshold.
    SpdAbs,
}

impl AlertMetric {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlertMetric::QddAbs => "qdd_abs",
            AlertMetric::BaseRateDisparityAbs => "base_rate_disparity_abs",
            AlertMetric::DiFourFifths => "di_four_fifths",
            AlertMetric::SpdAbs => "spd_abs",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlertRule {
    pub metric: AlertMetric,
    pub threshold: f64,
}

/// A feature the event schema requires. Optional features may be absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureFieldSpec {
    pub name: String,
    #[serde(default)]
    pub optional: bool,
}

fn default_bins() -> usize {
    10
}

fn default_window_ms() -> i64 {
    crate::synthetic::MS_PER_DAY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    pub protected_attribute: String,
    pub target_value: String,
    pub reference_value: String,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_window_ms")]
    pub window_ms: i64,
    #[serde(default)]
    pub alerts: Vec<AlertRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_rate_file: Option<PathBuf>,
    /// Conditioning attributes: reports are computed over the events
    /// matching every pair.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub condition: BTreeMap<String, String>,
    /// Score thresholds for the SPD/DI comparison columns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_schema: Option<Vec<FeatureFieldSpec>>,
    /// Generator settings used by the `simulate` command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
}

impl MonitorConfig {
    /// Monitoring the case-study stream: gender as the protected attribute,
    /// women against men, one bin per window-day.
    pub fn case_study() -> Self {
        MonitorConfig {
            protected_attribute: "gender".to_string(),
            target_value: "WOMAN".to_string(),
            reference_value: "MAN".to_string(),
            bins: 1,
            window_ms: crate::synthetic::MS_PER_DAY,
            alerts: vec![AlertRule {
                metric: AlertMetric::QddAbs,
                threshold: 1000.0,
            }],
            base_rate_file: None,
            condition: BTreeMap::new(),
            thresholds: vec![50_000.0, 100_000.0, 200_000.0],
            feature_schema: None,
            scenario: Some(ScenarioSpec::default()),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.protected_attribute.is_empty() {
            return Err(ConfigError::Invalid {
                reason: "protected_attribute is empty".to_string(),
            });
        }
        if self.target_value == self.reference_value {
            return Err(ConfigError::Invalid {
                reason: "target_value equals reference_value".to_string(),
            });
        }
        if self.bins < 1 {
            return Err(ConfigError::Invalid {
                reason: "bins must be at least 1".to_string(),
            });
        }
        if self.window_ms <= 0 {
            return Err(ConfigError::Invalid {
                reason: "window_ms must be positive".to_string(),
            });
        }
        for rule in &self.alerts {
            if !rule.threshold.is_finite() || rule.threshold < 0.0 {
                return Err(ConfigError::Invalid {
                    reason: format!(
                        "alert threshold for {} must be finite and non-negative",
                        rule.metric.as_str()
                    ),
                });
            }
        }
        if let Some(scenario) = &self.scenario {
            scenario.validate().map_err(|e| ConfigError::Invalid {
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn target_group(&self) -> GroupKey {
        GroupKey::new(self.protected_attribute.clone(), self.target_value.clone())
            .expect("validated attribute name")
    }

    pub fn reference_group(&self) -> GroupKey {
        GroupKey::new(self.protected_attribute.clone(), self.reference_value.clone())
            .expect("validated attribute name")
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let config: MonitorConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_path(&self, path: &Path) -> Result<(), ConfigError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_defaults() {
        let json = r#"{
            "protected_attribute": "gender",
            "target_value": "WOMAN",
            "reference_value": "MAN"
        }"#;
        let config: MonitorConfig = serde_json::from_str(json).unwrap();
        config.validate().unwrap();
        assert_eq!(config.bins, 10);
        assert_eq!(config.window_ms, crate::synthetic::MS_PER_DAY);
        assert!(config.alerts.is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let json = r#"{
            "protected_attribute": "gender",
            "target_value": "WOMAN",
            "reference_value": "MAN",
            "binz": 3
        }"#;
        assert!(serde_json::from_str::<MonitorConfig>(json).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut config = MonitorConfig::case_study();
        config.reference_value = config.target_value.clone();
        assert!(config.validate().is_err());

        let mut config = MonitorConfig::case_study();
        config.bins = 0;
        assert!(config.validate().is_err());

        let mut config = MonitorConfig::case_study();
        config.window_ms = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn alert_metric_names_are_stable() {
        let rule: AlertRule =
            serde_json::from_str(r#"{"metric": "qdd_abs", "threshold": 1000.0}"#).unwrap();
        assert_eq!(rule.metric, AlertMetric::QddAbs);
        assert_eq!(
            serde_json::to_string(&rule).unwrap(),
            r#"{"metric":"qdd_abs","threshold":1000.0}"#
        );
    }
}
