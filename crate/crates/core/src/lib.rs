//! FairCanary: continuous model-bias monitoring over prediction streams.
//!
//! The engine ingests already-scored prediction events, segments each
//! group's scores into equal-count quantile bins per time window, and
//! measures the Quantile Demographic Disparity (QDD) between a target and a
//! reference group — the per-bin difference of mean scores, in the model's
//! own output units. Per-event feature attributions are reused to decompose
//! each bin's disparity across features (QDDA), conventional threshold
//! metrics (SPD, DI) run alongside for comparison, and quantile norming
//! offers an opt-in post-processing mitigation.

pub mod config;
pub mod event;
pub mod explain;
pub mod metrics;
pub mod mitigation;
pub mod pipeline;
pub mod report;
pub mod synthetic;
pub mod threshold;

pub use config::{AlertMetric, AlertRule, ConfigError, MonitorConfig};
pub use event::{AttributionData, FeatureValue, PredictionEvent};
pub use explain::{
    check_efficiency, qdda, reconcile, AttributionCache, AttributionRecord, ExplainError,
    LinearAttributor, QddaReport,
};
pub use metrics::{
    conditional_qdd, disparity_with_base_rate, individual_alignment, intra_group_bias,
    qdd_per_bin, quantile_bin, wasserstein1, GroupKey, MetricsError, QddReport, QuantileBinning,
    ScoreSample,
};
pub use mitigation::{
    apply_mitigation, quantile_norm, select_disadvantaged, MitigationEntry, MitigationError,
    MitigationMap,
};
pub use pipeline::{
    compute_window_report, evaluate_alerts, replay_events, replay_path, Alert, AlertKind,
    Monitor, PipelineError, WindowReport,
};
pub use synthetic::{
    apply_bug, generate, salary, salary_attributor, sample_candidate, CandidateFeatures,
    DayStats, ScenarioSpec,
};
pub use threshold::{
    di, four_fifths_flags, spd, threshold_sweep, RuleFlags, ThresholdError, ThresholdMetricRow,
};
