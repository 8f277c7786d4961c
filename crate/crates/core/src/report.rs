//! Report persistence: one NDJSON document per window plus flat CSV views
//! for spreadsheets and plotting. Output is byte-stable for identical
//! reports.

use std::io::Write;
use std::path::Path;

use crate::pipeline::{AlertKind, WindowReport};

fn fmt_threshold(t: f64) -> String {
    // column-name friendly: integral thresholds print without a dot
    if t == t.trunc() && t.abs() < 1e15 {
        format!("{}", t as i64)
    } else {
        format!("{t}")
    }
}

/// All feature names appearing in any window's QDDA, sorted.
fn feature_union(reports: &[WindowReport]) -> Vec<String> {
    let mut features: Vec<String> = Vec::new();
    for report in reports {
        if let Some(qdda) = &report.qdda {
            for f in &qdda.features {
                if !features.contains(f) {
                    features.push(f.clone());
                }
            }
        }
    }
    features.sort();
    features
}

fn threshold_union(reports: &[WindowReport]) -> Vec<f64> {
    let mut thresholds: Vec<f64> = Vec::new();
    for report in reports {
        for row in &report.threshold_rows {
            if !thresholds.contains(&row.threshold) {
                thresholds.push(row.threshold);
            }
        }
    }
    thresholds
}

/// Flat per-bin view: window_id, bin_index, qdd, one `qdda_<feature>` column
/// per feature, then spd/di columns per configured threshold.
pub fn render_flat_csv(reports: &[WindowReport]) -> String {
    let features = feature_union(reports);
    let thresholds = threshold_union(reports);

    let mut header = String::from("window_id,bin_index,qdd");
    for f in &features {
        header.push_str(&format!(",qdda_{f}"));
    }
    for t in &thresholds {
        let label = fmt_threshold(*t);
        header.push_str(&format!(",spd_{label},di_{label}"));
    }
    let mut out = header;
    out.push('\n');

    for report in reports {
        let spd_di: Vec<(String, String)> = thresholds
            .iter()
            .map(|t| {
                match report.threshold_rows.iter().find(|row| row.threshold == *t) {
                    Some(row) => (
                        format!("{}", row.spd),
                        row.di.map(|d| format!("{d}")).unwrap_or_default(),
                    ),
                    None => (String::new(), String::new()),
                }
            })
            .collect();
        let qdd_bins: &[f64] = report
            .qdd
            .as_ref()
            .map(|q| q.per_bin_qdd.as_slice())
            .unwrap_or(&[]);
        if qdd_bins.is_empty() {
            out.push_str(&format!("{},,", report.window_id));
            for _ in &features {
                out.push(',');
            }
            for (spd, di) in &spd_di {
                out.push_str(&format!(",{spd},{di}"));
            }
            out.push('\n');
            continue;
        }
        for (bin, qdd) in qdd_bins.iter().enumerate() {
            out.push_str(&format!("{},{bin},{qdd}", report.window_id));
            for f in &features {
                let cell = report.qdda.as_ref().and_then(|qdda| {
                    qdda.features
                        .iter()
                        .position(|name| name == f)
                        .map(|col| qdda.per_bin_per_feature[bin][col])
                });
                match cell {
                    Some(v) => out.push_str(&format!(",{v}")),
                    None => out.push(','),
                }
            }
            for (spd, di) in &spd_di {
                out.push_str(&format!(",{spd},{di}"));
            }
            out.push('\n');
        }
    }
    out
}

/// Time series for plotting QDD over windows: window_id, one column per bin,
/// and the names of the bias rules that fired.
pub fn render_timeseries_csv(reports: &[WindowReport]) -> String {
    let max_bins = reports
        .iter()
        .filter_map(|r| r.qdd.as_ref().map(|q| q.per_bin_qdd.len()))
        .max()
        .unwrap_or(0);
    let mut out = String::from("window_id");
    for b in 0..max_bins {
        out.push_str(&format!(",qdd_bin_{b}"));
    }
    out.push_str(",alerts\n");
    for report in reports {
        out.push_str(&format!("{}", report.window_id));
        let bins: &[f64] = report
            .qdd
            .as_ref()
            .map(|q| q.per_bin_qdd.as_slice())
            .unwrap_or(&[]);
        for b in 0..max_bins {
            match bins.get(b) {
                Some(v) => out.push_str(&format!(",{v}")),
                None => out.push(','),
            }
        }
        let fired: Vec<&str> = report
            .alerts
            .iter()
            .filter(|a| a.kind == AlertKind::Bias)
            .map(|a| a.rule.as_str())
            .collect();
        out.push_str(&format!(",{}\n", fired.join("|")));
    }
    out
}

/// One JSON document per window, one line each.
pub fn render_windows_ndjson(reports: &[WindowReport]) -> String {
    let mut out = String::new();
    for report in reports {
        out.push_str(&serde_json::to_string(report).expect("reports serialize"));
        out.push('\n');
    }
    out
}

/// All alerts across windows as NDJSON.
pub fn render_alerts_ndjson(reports: &[WindowReport]) -> String {
    let mut out = String::new();
    for report in reports {
        for alert in &report.alerts {
            out.push_str(&serde_json::to_string(alert).expect("alerts serialize"));
            out.push('\n');
        }
    }
    out
}

/// Persist the standard report set under `dir`: `windows.ndjson`,
/// `report.csv`, `timeseries.csv`, and `alerts.ndjson`.
pub fn write_reports(dir: &Path, reports: &[WindowReport]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let write = |name: &str, contents: String| -> std::io::Result<()> {
        let mut file = std::fs::File::create(dir.join(name))?;
        file.write_all(contents.as_bytes())?;
        Ok(())
    };
    write("windows.ndjson", render_windows_ndjson(reports))?;
    write("report.csv", render_flat_csv(reports))?;
    write("timeseries.csv", render_timeseries_csv(reports))?;
    write("alerts.ndjson", render_alerts_ndjson(reports))?;
    Ok(())
}

/// Load window reports back from a report directory.
pub fn read_reports(dir: &Path) -> std::io::Result<Vec<WindowReport>> {
    let text = std::fs::read_to_string(dir.join("windows.ndjson"))?;
    let mut reports = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let report: WindowReport = serde_json::from_str(line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::QddaReport;
    use crate::metrics::{GroupKey, QddReport};
    use crate::threshold::{RuleFlags, ThresholdMetricRow};

    fn report() -> WindowReport {
        WindowReport {
            window_id: 0,
            events: 4,
            target_count: 2,
            reference_count: 2,
            incomplete: false,
            bin_count: 2,
            qdd: Some(QddReport {
                per_bin_qdd: vec![-1.0, 2.5],
                target_group: GroupKey::new("gender", "WOMAN").unwrap(),
                reference_group: GroupKey::new("gender", "MAN").unwrap(),
                window_id: Some("0".into()),
                bin_count: 2,
            }),
            base_rate_disparity: None,
            qdda: Some(QddaReport {
                features: vec!["edu".into(), "exp".into()],
                per_bin_per_feature: vec![vec![-1.0, 0.0], vec![2.0, 0.5]],
                method_tag: "m".into(),
                residual_per_bin: vec![0.0, 0.0],
                bin_count: 2,
            }),
            threshold_rows: vec![ThresholdMetricRow {
                threshold: 50_000.0,
                spd: 0.25,
                di: Some(0.9),
                flags: RuleFlags::default(),
            }],
            alerts: vec![],
        }
    }

    #[test]
    fn flat_csv_shape() {
        let csv = render_flat_csv(&[report()]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "window_id,bin_index,qdd,qdda_edu,qdda_exp,spd_50000,di_50000"
        );
        assert_eq!(lines.next().unwrap(), "0,0,-1,-1,0,0.25,0.9");
        assert_eq!(lines.next().unwrap(), "0,1,2.5,2,0.5,0.25,0.9");
        assert!(lines.next().is_none());
    }

    #[test]
    fn timeseries_csv_shape() {
        let csv = render_timeseries_csv(&[report()]);
        assert_eq!(
            csv,
            "window_id,qdd_bin_0,qdd_bin_1,alerts\n0,-1,2.5,\n"
        );
    }

    #[test]
    fn ndjson_roundtrip_via_dir() {
        let dir = tempfile::tempdir().unwrap();
        let reports = vec![report()];
        write_reports(dir.path(), &reports).unwrap();
        let back = read_reports(dir.path()).unwrap();
        assert_eq!(back, reports);
    }
}
