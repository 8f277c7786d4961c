//! Python bindings: the core metrics as plain functions over score lists,
//! plus a `QddMonitor` class speaking the NDJSON event format. Structured
//! results cross the boundary as JSON strings so the Python surface stays
//! schema-stable with the CLI reports.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use faircanary_core::config::MonitorConfig;
use faircanary_core::event::PredictionEvent;
use faircanary_core::explain::{AttributionRecord, LinearAttributor};
use faircanary_core::metrics::{GroupKey, ScoreSample};
use faircanary_core::pipeline::Monitor;
use faircanary_core::synthetic::{generate, ScenarioSpec};
use faircanary_core::{metrics, mitigation, threshold};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sample(scores: Vec<f64>, label: &str) -> PyResult<ScoreSample> {
    let group = GroupKey::new("group", label).map_err(value_err)?;
    ScoreSample::from_scores(scores, group).map_err(value_err)
}

/// Per-bin quantile demographic disparity between two score lists.
#[pyfunction]
fn qdd_per_bin(target: Vec<f64>, reference: Vec<f64>, bins: usize) -> PyResult<Vec<f64>> {
    let t = sample(target, "target")?;
    let r = sample(reference, "reference")?;
    Ok(metrics::qdd_per_bin(&t, &r, bins)
        .map_err(value_err)?
        .per_bin_qdd)
}

/// Exact Wasserstein-1 distance between equal-size score lists.
#[pyfunction]
fn wasserstein1(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    let a = sample(a, "a")?;
    let b = sample(b, "b")?;
    metrics::wasserstein1(&a, &b).map_err(value_err)
}

/// Same-rank score differences at min(len) nearest-rank quantiles.
#[pyfunction]
fn individual_alignment(target: Vec<f64>, reference: Vec<f64>) -> PyResult<Vec<f64>> {
    let t = sample(target, "target")?;
    let r = sample(reference, "reference")?;
    metrics::individual_alignment(&t, &r).map_err(value_err)
}

/// Largest absolute per-bin QDD between two sub-samples of one group.
#[pyfunction]
fn intra_group_bias(sub_target: Vec<f64>, sub_reference: Vec<f64>, bins: usize) -> PyResult<f64> {
    let t = sample(sub_target, "sub_target")?;
    let r = sample(sub_reference, "sub_reference")?;
    metrics::intra_group_bias(&t, &r, bins).map_err(value_err)
}

/// Quantile-norm the disadvantaged scores against the advantaged sample;
/// returns the mitigated scores in ascending original-score rank.
#[pyfunction]
fn quantile_norm(disadvantaged: Vec<f64>, advantaged: Vec<f64>) -> PyResult<Vec<f64>> {
    let d = sample(disadvantaged, "disadvantaged")?;
    let a = sample(advantaged, "advantaged")?;
    Ok(mitigation::quantile_norm(&d, &a)
        .entries
        .into_iter()
        .map(|e| e.mitigated_score)
        .collect())
}

/// Statistical parity difference at a decision threshold.
#[pyfunction]
fn spd(privileged: Vec<f64>, unprivileged: Vec<f64>, threshold_value: f64) -> PyResult<f64> {
    let p = sample(privileged, "privileged")?;
    let u = sample(unprivileged, "unprivileged")?;
    Ok(threshold::spd(&p, &u, threshold_value))
}

/// Disparate impact at a decision threshold; None when undefined.
#[pyfunction]
fn di(privileged: Vec<f64>, unprivileged: Vec<f64>, threshold_value: f64) -> PyResult<Option<f64>> {
    let p = sample(privileged, "privileged")?;
    let u = sample(unprivileged, "unprivileged")?;
    Ok(threshold::di(&p, &u, threshold_value))
}

/// Four-fifths rule flags as (spd_flag, di_flag).
#[pyfunction]
fn four_fifths_flags(spd_value: f64, di_value: Option<f64>) -> (bool, bool) {
    let flags = threshold::four_fifths_flags(spd_value, di_value);
    (flags.spd, flags.di)
}

/// Efficiency check: (pass, absolute residual) for a set of attributions
/// against its prediction and baseline.
#[pyfunction]
fn check_efficiency(
    values: BTreeMap<String, f64>,
    baseline_prediction: f64,
    prediction: f64,
) -> (bool, f64) {
    let record = AttributionRecord {
        event_id: String::new(),
        per_feature_attribution: values,
        baseline_prediction,
        method_tag: "python".to_string(),
    };
    let check = faircanary_core::explain::check_efficiency(&record, prediction);
    (check.pass, check.residual)
}

/// Exact linear-model attributions: coef_f * (x_f - baseline_f) per feature.
#[pyfunction]
fn linear_attribution(
    coefficients: BTreeMap<String, f64>,
    intercept: f64,
    baseline_input: BTreeMap<String, f64>,
    features: BTreeMap<String, f64>,
) -> PyResult<BTreeMap<String, f64>> {
    let attributor =
        LinearAttributor::new(coefficients, intercept, baseline_input).map_err(value_err)?;
    Ok(attributor
        .attribute("py", &features)
        .map_err(value_err)?
        .per_feature_attribution)
}

/// Generate the synthetic scenario to an NDJSON file; returns the event
/// count. Optional overrides mirror the CLI flags.
#[pyfunction]
#[pyo3(signature = (out_path, seed=None, days=None, events_per_day=None))]
fn simulate_scenario(
    out_path: &str,
    seed: Option<u64>,
    days: Option<u32>,
    events_per_day: Option<usize>,
) -> PyResult<usize> {
    let mut spec = ScenarioSpec::default();
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    if let Some(days) = days {
        spec.days = days;
    }
    if let Some(n) = events_per_day {
        spec.events_per_day = n;
    }
    let (events, _) = generate(&spec).map_err(value_err)?;
    let file = std::fs::File::create(out_path).map_err(value_err)?;
    let mut writer = std::io::BufWriter::new(file);
    faircanary_core::event::write_events(&mut writer, &events).map_err(value_err)?;
    use std::io::Write;
    writer.flush().map_err(value_err)?;
    Ok(events.len())
}

/// Replay an NDJSON event file and return the window reports as a JSON
/// array string. `config_json` defaults to the case-study configuration.
#[pyfunction]
#[pyo3(signature = (events_path, config_json=None))]
fn replay(events_path: &str, config_json: Option<&str>) -> PyResult<String> {
    let config = parse_config(config_json)?;
    let reports = faircanary_core::pipeline::replay_path(
        &config,
        std::path::Path::new(events_path),
    )
    .map_err(value_err)?;
    serde_json::to_string(&reports).map_err(value_err)
}

fn parse_config(config_json: Option<&str>) -> PyResult<MonitorConfig> {
    let config = match config_json {
        Some(text) => serde_json::from_str::<MonitorConfig>(text).map_err(value_err)?,
        None => MonitorConfig::case_study(),
    };
    config.validate().map_err(value_err)?;
    Ok(config)
}

/// Streaming monitor over NDJSON event lines.
#[pyclass]
struct QddMonitor {
    inner: Monitor,
}

#[pymethods]
impl QddMonitor {
    /// Build from a config JSON string; None uses the case-study defaults.
    #[new]
    #[pyo3(signature = (config_json=None))]
    fn new(config_json: Option<&str>) -> PyResult<Self> {
        let config = parse_config(config_json)?;
        Ok(QddMonitor {
            inner: Monitor::new(config).map_err(value_err)?,
        })
    }

    /// Ingest one event (NDJSON line); returns the window id it landed in.
    fn ingest(&self, event_json: &str) -> PyResult<i64> {
        let event: PredictionEvent = serde_json::from_str(event_json).map_err(value_err)?;
        self.inner.ingest(event).map_err(value_err)
    }

    /// Close one window and return its report as a JSON string.
    fn close_window(&self, window_id: i64) -> PyResult<String> {
        let report = self.inner.close_window(window_id).map_err(value_err)?;
        serde_json::to_string(&report).map_err(value_err)
    }

    /// Close every open window; returns all reports as a JSON array string.
    fn close_all(&self) -> PyResult<String> {
        let reports = self.inner.close_all().map_err(value_err)?;
        serde_json::to_string(&reports).map_err(value_err)
    }

    /// Events rejected because their window had already closed.
    fn late_rejections(&self) -> u64 {
        self.inner.late_rejections()
    }
}

#[pymodule]
fn faircanary_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(qdd_per_bin, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein1, m)?)?;
    m.add_function(wrap_pyfunction!(individual_alignment, m)?)?;
    m.add_function(wrap_pyfunction!(intra_group_bias, m)?)?;
    m.add_function(wrap_pyfunction!(quantile_norm, m)?)?;
    m.add_function(wrap_pyfunction!(spd, m)?)?;
    m.add_function(wrap_pyfunction!(di, m)?)?;
    m.add_function(wrap_pyfunction!(four_fifths_flags, m)?)?;
    m.add_function(wrap_pyfunction!(check_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(linear_attribution, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_class::<QddMonitor>()?;
    Ok(())
}
