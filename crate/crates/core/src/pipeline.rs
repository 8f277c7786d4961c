//! The continuous monitoring loop: ingest scored events into tumbling
//! time windows keyed by event timestamp, freeze each window on close, and
//! compute its QDD, QDDA, base-rate drift, and threshold-metric reports on
//! the immutable snapshot. Replay of a recorded stream is deterministic:
//! the same file and config produce bit-identical reports regardless of
//! input order.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{AlertMetric, AlertRule, MonitorConfig};
use crate::event::PredictionEvent;
use crate::explain::{self, AttributionRecord, ExplainError, QddaReport};
use crate::metrics::{
    disparity_with_base_rate, qdd_per_bin, MetricsError, QddReport, ScoreSample,
};
use crate::threshold::{threshold_sweep, ThresholdMetricRow};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("event {event_id} violates the schema: {reason}")]
    SchemaViolation { event_id: String, reason: String },
    #[error("window {window_id} is closed")]
    ClosedWindow { window_id: i64 },
    #[error("duplicate event {event_id} in window {window_id}")]
    DuplicateEvent { event_id: String, window_id: i64 },
    #[error("window {window_id} has no events")]
    UnknownWindow { window_id: i64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("configuration error: {reason}")]
    Config { reason: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertKind {
    /// A configured bias rule was violated.
    Bias,
    /// The window could not be fully analyzed; not a bias finding.
    Diagnostic,
}

/// Ranked share of one feature in the window's total |QDDA|.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopFeature {
    pub feature: String,
    pub total_abs_qdda: f64,
}

/// One fired rule. The observed value genuinely violates the rule it cites;
/// diagnostics carry no observed/threshold pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub window_id: i64,
    pub rule: String,
    pub kind: AlertKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub top_features: Vec<TopFeature>,
}

/// Everything computed for one closed window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_id: i64,
    pub events: usize,
    pub target_count: usize,
    pub reference_count: usize,
    /// Set when one of the groups was empty (possibly after conditioning),
    /// leaving the QDD report uncomputable.
    pub incomplete: bool,
    pub bin_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qdd: Option<QddReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_rate_disparity: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qdda: Option<QddaReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub threshold_rows: Vec<ThresholdMetricRow>,
    pub alerts: Vec<Alert>,
}

impl WindowReport {
    pub fn bias_alerts(&self) -> impl Iterator<Item = &Alert> {
        self.alerts.iter().filter(|a| a.kind == AlertKind::Bias)
    }
}

struct WindowSlot {
    events: Vec<PredictionEvent>,
    ids: HashSet<String>,
    closed: bool,
}

impl WindowSlot {
    fn new() -> Self {
        WindowSlot {
            events: Vec::new(),
            ids: HashSet::new(),
            closed: false,
        }
    }
}

/// The monitoring engine. Appends to open windows are linearizable per
/// store; closing takes an exclusive snapshot and computes reports outside
/// the lock, so readers never observe a partially closed window.
pub struct Monitor {
    config: MonitorConfig,
    base_rate: Option<QddReport>,
    store: Mutex<BTreeMap<i64, WindowSlot>>,
    reports: Mutex<BTreeMap<i64, WindowReport>>,
    late_rejections: AtomicU64,
}

impl Monitor {
    /// Build a monitor, loading the base-rate report when the config names
    /// one.
    pub fn new(config: MonitorConfig) -> Result<Self, PipelineError> {
        let base_rate = match &config.base_rate_file {
            Some(path) => Some(load_base_rate(path, &config)?),
            None => None,
        };
        Ok(Monitor::with_base_rate(config, base_rate))
    }

    pub fn with_base_rate(config: MonitorConfig, base_rate: Option<QddReport>) -> Self {
        Monitor {
            config,
            base_rate,
            store: Mutex::new(BTreeMap::new()),
            reports: Mutex::new(BTreeMap::new()),
            late_rejections: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    /// Number of events rejected because their window had already closed.
    pub fn late_rejections(&self) -> u64 {
        self.late_rejections.load(Ordering::Relaxed)
    }

    pub fn window_id_for(&self, ts_ms: i64) -> i64 {
        ts_ms.div_euclid(self.config.window_ms)
    }

    /// Validate and append one event; returns the window it landed in.
    pub fn ingest(&self, event: PredictionEvent) -> Result<i64, PipelineError> {
        self.validate(&event)?;
        let window_id = self.window_id_for(event.ts_ms);
        let mut store = self.store.lock().expect("store lock");
        let slot = store.entry(window_id).or_insert_with(WindowSlot::new);
        if slot.closed {
            self.late_rejections.fetch_add(1, Ordering::Relaxed);
            return Err(PipelineError::ClosedWindow { window_id });
        }
        if !slot.ids.insert(event.event_id.clone()) {
            return Err(PipelineError::DuplicateEvent {
                event_id: event.event_id,
                window_id,
            });
        }
        slot.events.push(event);
        Ok(window_id)
    }

    fn validate(&self, event: &PredictionEvent) -> Result<(), PipelineError> {
        if event.event_id.is_empty() {
            return Err(PipelineError::SchemaViolation {
                event_id: String::new(),
                reason: "event_id is empty".to_string(),
            });
        }
        if !event.score.is_finite() {
            return Err(PipelineError::SchemaViolation {
                event_id: event.event_id.clone(),
                reason: "score is not finite".to_string(),
            });
        }
        if let Some(schema) = &self.config.feature_schema {
            for field in schema {
                if !field.optional && !event.features.contains_key(&field.name) {
                    return Err(PipelineError::SchemaViolation {
                        event_id: event.event_id.clone(),
                        reason: format!("required feature {} is missing", field.name),
                    });
                }
            }
        }
        if let Some(attribution) = &event.attribution {
            let record = AttributionRecord {
                event_id: event.event_id.clone(),
                per_feature_attribution: attribution.values.clone(),
                baseline_prediction: attribution.baseline_prediction,
                method_tag: attribution.method.clone(),
            };
            // an attribution explains the model's prediction; for mitigated
            // events that value lives in the original_score audit field
            let prediction = event.original_score.unwrap_or(event.score);
            let check = explain::check_efficiency(&record, prediction);
            if !check.pass {
                return Err(PipelineError::SchemaViolation {
                    event_id: event.event_id.clone(),
                    reason: format!(
                        "attribution violates efficiency (residual {})",
                        check.residual
                    ),
                });
            }
        }
        Ok(())
    }

    /// Freeze a window and compute its report. The window becomes immutable;
    /// closing it again or ingesting into it afterwards is an error.
    pub fn close_window(&self, window_id: i64) -> Result<WindowReport, PipelineError> {
        let snapshot = {
            let mut store = self.store.lock().expect("store lock");
            let slot = store
                .get_mut(&window_id)
                .ok_or(PipelineError::UnknownWindow { window_id })?;
            if slot.closed {
                return Err(PipelineError::ClosedWindow { window_id });
            }
            slot.closed = true;
            slot.events.clone()
        };
        let report =
            compute_window_report(&self.config, self.base_rate.as_ref(), window_id, &snapshot);
        self.reports
            .lock()
            .expect("reports lock")
            .insert(window_id, report.clone());
        Ok(report)
    }

    /// Window ids currently held, open or closed, in ascending order.
    pub fn window_ids(&self) -> Vec<i64> {
        self.store.lock().expect("store lock").keys().copied().collect()
    }

    /// Close every open window in ascending id order and return all reports.
    pub fn close_all(&self) -> Result<Vec<WindowReport>, PipelineError> {
        let ids = self.window_ids();
        let mut reports = self.reports.lock().expect("reports lock").clone();
        for id in ids {
            if !reports.contains_key(&id) {
                drop(reports);
                self.close_window(id)?;
                reports = self.reports.lock().expect("reports lock").clone();
            }
        }
        Ok(reports.into_values().collect())
    }

    /// Report for an already-closed window.
    pub fn report_for(&self, window_id: i64) -> Option<WindowReport> {
        self.reports.lock().expect("reports lock").get(&window_id).cloned()
    }

    /// Snapshot of a closed window's events, for audits and mitigation.
    pub fn window_events(&self, window_id: i64) -> Result<Vec<PredictionEvent>, PipelineError> {
        let store = self.store.lock().expect("store lock");
        let slot = store
            .get(&window_id)
            .ok_or(PipelineError::UnknownWindow { window_id })?;
        Ok(slot.events.clone())
    }
}

fn load_base_rate(path: &Path, config: &MonitorConfig) -> Result<QddReport, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let report: QddReport = serde_json::from_str(&text).map_err(|e| PipelineError::Config {
        reason: format!("cannot parse base-rate file {}: {e}", path.display()),
    })?;
    if report.bin_count != config.bins {
        return Err(PipelineError::Config {
            reason: format!(
                "base-rate bins ({}) do not match configured bins ({})",
                report.bin_count, config.bins
            ),
        });
    }
    if report.target_group != config.target_group()
        || report.reference_group != config.reference_group()
    {
        return Err(PipelineError::Config {
            reason: "base-rate groups do not match the configured groups".to_string(),
        });
    }
    Ok(report)
}

fn diagnostic(window_id: i64, rule: &str, detail: String) -> Alert {
    Alert {
        window_id,
        rule: rule.to_string(),
        kind: AlertKind::Diagnostic,
        observed: None,
        threshold: None,
        detail,
        top_features: Vec::new(),
    }
}

/// Compute all reports for one frozen window snapshot.
pub fn compute_window_report(
    config: &MonitorConfig,
    base_rate: Option<&QddReport>,
    window_id: i64,
    events: &[PredictionEvent],
) -> WindowReport {
    let target_group = config.target_group();
    let reference_group = config.reference_group();

    let scoped: Vec<&PredictionEvent> = events
        .iter()
        .filter(|e| e.matches_all(&config.condition))
        .collect();
    let conditioned_out = events.len() - scoped.len();

    let target_events: Vec<&PredictionEvent> = scoped
        .iter()
        .copied()
        .filter(|e| target_group.contains(e))
        .collect();
    let reference_events: Vec<&PredictionEvent> = scoped
        .iter()
        .copied()
        .filter(|e| reference_group.contains(e))
        .collect();

    let mut report = WindowReport {
        window_id,
        events: events.len(),
        target_count: target_events.len(),
        reference_count: reference_events.len(),
        incomplete: false,
        bin_count: 0,
        qdd: None,
        base_rate_disparity: None,
        qdda: None,
        threshold_rows: Vec::new(),
        alerts: Vec::new(),
    };

    if target_events.is_empty() || reference_events.is_empty() {
        report.incomplete = true;
        let empty = if target_events.is_empty() {
            target_group.to_string()
        } else {
            reference_group.to_string()
        };
        let detail = if conditioned_out > 0 {
            format!("group {empty} has no events in this window after conditioning")
        } else {
            format!("group {empty} has no events in this window")
        };
        report.alerts.push(diagnostic(window_id, "empty_group", detail));
        return report;
    }

    let build_sample = |events: &[&PredictionEvent], group: &crate::metrics::GroupKey| {
        ScoreSample::new(
            events.iter().map(|e| e.score).collect(),
            events.iter().map(|e| e.event_id.clone()).collect(),
            group.clone(),
        )
        .expect("non-empty by construction")
    };
    let target_sample = build_sample(&target_events, &target_group);
    let reference_sample = build_sample(&reference_events, &reference_group);

    // a thin window cannot support the configured resolution; degrade to the
    // largest feasible bin count rather than dropping the report
    let bins = config
        .bins
        .min(target_sample.len())
        .min(reference_sample.len());
    report.bin_count = bins;
    if bins < config.bins {
        report.alerts.push(diagnostic(
            window_id,
            "bins_reduced",
            format!(
                "window too small for {} bins; used {bins}",
                config.bins
            ),
        ));
    }

    let qdd = qdd_per_bin(&target_sample, &reference_sample, bins)
        .expect("bins bounded by sample sizes")
        .with_window(window_id.to_string());

    if let Some(base) = base_rate {
        match disparity_with_base_rate(&qdd, base) {
            Ok(disparity) => report.base_rate_disparity = Some(disparity),
            Err(e) => report.alerts.push(diagnostic(
                window_id,
                "base_rate_mismatch",
                e.to_string(),
            )),
        }
    }

    let with_attribution = target_events
        .iter()
        .chain(reference_events.iter())
        .filter(|e| e.attribution.is_some())
        .count();
    let total_grouped = target_events.len() + reference_events.len();
    let mitigated = target_events
        .iter()
        .chain(reference_events.iter())
        .any(|e| e.original_score.is_some());
    if mitigated && with_attribution > 0 {
        // mitigated scores no longer match the predictions the attributions
        // explain, so the per-bin decomposition would not hold
        report.alerts.push(diagnostic(
            window_id,
            "qdda_skipped_mitigated",
            "window contains mitigated scores; attributions explain the \
             pre-mitigation predictions"
                .to_string(),
        ));
    } else if with_attribution == total_grouped {
        match explain::qdda(&target_events, &reference_events, bins) {
            Ok(qdda) => report.qdda = Some(qdda),
            Err(e) => report.alerts.push(diagnostic(
                window_id,
                "qdda_failed",
                e.to_string(),
            )),
        }
    } else if with_attribution > 0 {
        // a partial set would break the decomposition identity; refuse and
        // say which event is missing its record
        let missing = target_events
            .iter()
            .chain(reference_events.iter())
            .find(|e| e.attribution.is_none())
            .map(|e| e.event_id.clone())
            .unwrap_or_default();
        report.alerts.push(diagnostic(
            window_id,
            "qdda_incomplete",
            format!(
                "{} of {} grouped events lack attributions (first missing: {missing})",
                total_grouped - with_attribution,
                total_grouped
            ),
        ));
    }

    if !config.thresholds.is_empty() {
        // the reference group is treated as privileged
        report.threshold_rows =
            threshold_sweep(&reference_sample, &target_sample, &config.thresholds)
                .expect("thresholds checked non-empty");
    }

    report.qdd = Some(qdd);
    let mut bias = evaluate_alerts(&report, &config.alerts);
    report.alerts.append(&mut bias);
    report
}

/// Evaluate configured rules against a computed report: one alert per
/// violated rule, each carrying the observed value that violates it and the
/// window's top features by |QDDA| when explanations are available.
pub fn evaluate_alerts(report: &WindowReport, rules: &[AlertRule]) -> Vec<Alert> {
    let top_features: Vec<TopFeature> = report
        .qdda
        .as_ref()
        .map(|qdda| {
            qdda.top_features(3)
                .into_iter()
                .map(|(feature, total_abs_qdda)| TopFeature {
                    feature,
                    total_abs_qdda,
                })
                .collect()
        })
        .unwrap_or_default();

    let mut alerts = Vec::new();
    for rule in rules {
        let fired = match rule.metric {
            AlertMetric::QddAbs => report.qdd.as_ref().and_then(|qdd| {
                let observed = qdd.max_abs();
                (observed > rule.threshold).then(|| {
                    (observed, format!("max |QDD| {observed} exceeds {}", rule.threshold))
                })
            }),
            AlertMetric::BaseRateDisparityAbs => {
                report.base_rate_disparity.as_ref().and_then(|disparity| {
                    let observed = disparity.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                    (observed > rule.threshold).then(|| {
                        (
                            observed,
                            format!(
                                "max |QDD - base rate| {observed} exceeds {}",
                                rule.threshold
                            ),
                        )
                    })
                })
            }
            AlertMetric::DiFourFifths => {
                let lower = rule.threshold;
                let upper = 1.0 / rule.threshold;
                report
                    .threshold_rows
                    .iter()
                    .filter_map(|row| row.di.map(|di| (row.threshold, di)))
                    .filter(|(_, di)| *di < lower || *di > upper)
                    .map(|(t, di)| {
                        (
                            di,
                            format!("DI {di} at score threshold {t} outside [{lower}, {upper}]"),
                        )
                    })
                    .next()
            }
            AlertMetric::SpdAbs => report
                .threshold_rows
                .iter()
                .filter(|row| row.spd.abs() > rule.threshold)
                .map(|row| {
                    (
                        row.spd,
                        format!(
                            "|SPD| {} at score threshold {} exceeds {}",
                            row.spd.abs(),
                            row.threshold,
                            rule.threshold
                        ),
                    )
                })
                .next(),
        };
        if let Some((observed, detail)) = fired {
            alerts.push(Alert {
                window_id: report.window_id,
                rule: rule.metric.as_str().to_string(),
                kind: AlertKind::Bias,
                observed: Some(observed),
                threshold: Some(rule.threshold),
                detail,
                top_features: top_features.clone(),
            });
        }
    }
    alerts
}

/// Replay a recorded event stream: sort by timestamp (ties by event id),
/// ingest everything, close each window in ascending order, and return the
/// reports. Deterministic for a given file and config.
pub fn replay_events(
    config: &MonitorConfig,
    mut events: Vec<PredictionEvent>,
) -> Result<Vec<WindowReport>, PipelineError> {
    events.sort_by(|a, b| a.ts_ms.cmp(&b.ts_ms).then_with(|| a.event_id.cmp(&b.event_id)));
    let monitor = Monitor::new(config.clone())?;
    for event in events {
        monitor.ingest(event)?;
    }
    monitor.close_all()
}

/// Replay an NDJSON event file from disk.
pub fn replay_path(config: &MonitorConfig, path: &Path) -> Result<Vec<WindowReport>, PipelineError> {
    let events = crate::event::read_events_from_path(path)?;
    replay_events(config, events)
}
