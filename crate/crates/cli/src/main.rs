//! `faircanary` — operator CLI for the monitoring engine.
//!
//! Machine-readable output (NDJSON, CSV) goes to stdout; human summaries go
//! to stderr. Exit codes: 0 success, 1 bias alerts fired under
//! `--fail-on-alert`, 2 usage error, 3 data or I/O error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use faircanary_core::config::MonitorConfig;
use faircanary_core::event::{read_events_from_path, write_events, PredictionEvent};
use faircanary_core::metrics::ScoreSample;
use faircanary_core::mitigation::{apply_mitigation, quantile_norm, select_disadvantaged};
use faircanary_core::pipeline::{replay_events, AlertKind, PipelineError, WindowReport};
use faircanary_core::report::{read_reports, render_flat_csv, write_reports};
use faircanary_core::synthetic::generate;

#[derive(Parser)]
#[command(name = "faircanary", version, about = "Continuous fairness monitoring over prediction streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Monitor configuration (JSON). Falls back to the FAIRCANARY_CONFIG
    /// environment variable, then to the built-in case-study defaults.
    #[arg(long, env = "FAIRCANARY_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<MonitorConfig, CliError> {
        match &self.config {
            Some(path) => MonitorConfig::from_path(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display()))),
            None => Ok(MonitorConfig::case_study()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic scenario stream as NDJSON
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of days
        #[arg(long)]
        days: Option<u32>,
        /// Override events per day
        #[arg(long)]
        events_per_day: Option<usize>,
        /// Output event file
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Replay an event file, write per-window reports, and emit alerts
    Monitor {
        #[command(flatten)]
        config: ConfigArg,
        /// Input NDJSON event file
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Directory for windows.ndjson, report.csv, timeseries.csv,
        /// alerts.ndjson
        #[arg(long, value_name = "DIR")]
        report_dir: PathBuf,
        /// Also write alerts to this file
        #[arg(long, value_name = "FILE")]
        alerts_file: Option<PathBuf>,
        /// Exit with status 1 if any bias alert fires
        #[arg(long)]
        fail_on_alert: bool,
    },
    /// Print persisted reports: the flat CSV, or one window as JSON
    Report {
        /// Report directory written by `monitor`
        #[arg(long, value_name = "DIR")]
        report_dir: PathBuf,
        /// Print a single window's full report as JSON
        #[arg(long)]
        window: Option<i64>,
    },
    /// Per-feature QDDA table for one window
    Explain {
        #[command(flatten)]
        config: ConfigArg,
        /// Input NDJSON event file
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Window id to explain
        #[arg(long)]
        window: i64,
        /// Keep only the k features with the largest total |QDDA|
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Build (and optionally apply) a quantile-norming mitigation map
    Mitigate {
        #[command(flatten)]
        config: ConfigArg,
        /// Input NDJSON event file
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Window id to mitigate
        #[arg(long)]
        window: i64,
        /// Write the map CSV here instead of stdout
        #[arg(long, value_name = "FILE")]
        map_out: Option<PathBuf>,
        /// Treat this group value as disadvantaged instead of the
        /// lower-mean rule
        #[arg(long, value_name = "VALUE")]
        disadvantaged: Option<String>,
        /// Apply the map and write the mitigated event file
        #[arg(long, requires = "out")]
        apply: bool,
        /// Mitigated event file (with --apply)
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// SPD/DI comparison table per window over score thresholds
    CompareMetrics {
        #[command(flatten)]
        config: ConfigArg,
        /// Input NDJSON event file
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Comma-separated score thresholds
        #[arg(long, value_delimiter = ',', value_name = "T,...")]
        thresholds: Vec<f64>,
    },
}

enum CliError {
    Usage(String),
    Data(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(CliError::Usage(message)) => {
            eprintln!("usage error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Data(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Simulate {
            config,
            seed,
            days,
            events_per_day,
            out,
        } => simulate(&config, seed, days, events_per_day, &out),
        Command::Monitor {
            config,
            input,
            report_dir,
            alerts_file,
            fail_on_alert,
        } => monitor(&config, &input, &report_dir, alerts_file.as_deref(), fail_on_alert),
        Command::Report { report_dir, window } => report(&report_dir, window),
        Command::Explain {
            config,
            input,
            window,
            top_k,
        } => explain(&config, &input, window, top_k),
        Command::Mitigate {
            config,
            input,
            window,
            map_out,
            disadvantaged,
            apply,
            out,
        } => mitigate(
            &config,
            &input,
            window,
            map_out.as_deref(),
            disadvantaged.as_deref(),
            apply,
            out.as_deref(),
        ),
        Command::CompareMetrics {
            config,
            input,
            thresholds,
        } => compare_metrics(&config, &input, &thresholds),
    }
}

fn simulate(
    config: &ConfigArg,
    seed: Option<u64>,
    days: Option<u32>,
    events_per_day: Option<usize>,
    out: &Path,
) -> Result<ExitCode, CliError> {
    let config = config.load()?;
    let mut spec = config.scenario.clone().unwrap_or_default();
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    if let Some(days) = days {
        spec.days = days;
    }
    if let Some(n) = events_per_day {
        spec.events_per_day = n;
    }
    let (events, stats) = generate(&spec).map_err(|e| CliError::Data(e.to_string()))?;
    let file = std::fs::File::create(out)?;
    let mut writer = std::io::BufWriter::new(file);
    write_events(&mut writer, &events)?;
    writer.flush()?;
    eprintln!(
        "wrote {} events over {} day(s) to {} (seed {})",
        events.len(),
        spec.days,
        out.display(),
        spec.seed
    );
    for day in &stats {
        eprintln!(
            "  day {}: {} events ({} women, {} men){}",
            day.day,
            day.events,
            day.women,
            day.men,
            if day.bugged { " [education bug active]" } else { "" }
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn monitor(
    config: &ConfigArg,
    input: &Path,
    report_dir: &Path,
    alerts_file: Option<&Path>,
    fail_on_alert: bool,
) -> Result<ExitCode, CliError> {
    let config = config.load()?;
    let events = read_events_from_path(input)?;
    let reports = replay_events(&config, events)?;
    write_reports(report_dir, &reports)?;

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut alert_sink: Option<std::fs::File> = match alerts_file {
        Some(path) => Some(std::fs::File::create(path)?),
        None => None,
    };
    let mut bias_alerts = 0usize;
    for report in &reports {
        for alert in &report.alerts {
            let line =
                serde_json::to_string(alert).map_err(|e| CliError::Data(e.to_string()))?;
            writeln!(out, "{line}")?;
            if let Some(sink) = alert_sink.as_mut() {
                writeln!(sink, "{line}")?;
            }
            if alert.kind == AlertKind::Bias {
                bias_alerts += 1;
            }
        }
    }
    eprintln!(
        "{} window(s), {} bias alert(s); reports in {}",
        reports.len(),
        bias_alerts,
        report_dir.display()
    );
    if fail_on_alert && bias_alerts > 0 {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn report(report_dir: &Path, window: Option<i64>) -> Result<ExitCode, CliError> {
    let reports = read_reports(report_dir)?;
    match window {
        Some(id) => {
            let report = reports
                .iter()
                .find(|r| r.window_id == id)
                .ok_or_else(|| CliError::Data(format!("no report for window {id}")))?;
            let text = serde_json::to_string_pretty(report)
                .map_err(|e| CliError::Data(e.to_string()))?;
            println!("{text}");
        }
        None => {
            print!("{}", render_flat_csv(&reports));
            eprintln!("{} window report(s)", reports.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn window_report_for(
    config: &MonitorConfig,
    input: &Path,
    window: i64,
) -> Result<(WindowReport, Vec<PredictionEvent>), CliError> {
    let events = read_events_from_path(input)?;
    let reports = replay_events(config, events.clone())?;
    let report = reports
        .into_iter()
        .find(|r| r.window_id == window)
        .ok_or_else(|| CliError::Data(format!("no events fall into window {window}")))?;
    Ok((report, events))
}

fn explain(
    config: &ConfigArg,
    input: &Path,
    window: i64,
    top_k: Option<usize>,
) -> Result<ExitCode, CliError> {
    let config = config.load()?;
    let (report, _) = window_report_for(&config, input, window)?;
    let qdda = report.qdda.as_ref().ok_or_else(|| {
        CliError::Data(format!(
            "window {window} has no explanation (attributions missing or group empty)"
        ))
    })?;
    let k = top_k.unwrap_or(qdda.features.len()).min(qdda.features.len());
    let ranked = qdda.top_features(k);

    let mut line = String::from("feature,total_abs_qdda");
    for b in 0..qdda.bin_count {
        line.push_str(&format!(",qdda_bin_{b}"));
    }
    println!("{line}");
    for (feature, total) in &ranked {
        let col = qdda.features.iter().position(|f| f == feature).unwrap();
        let mut line = format!("{feature},{total}");
        for row in &qdda.per_bin_per_feature {
            line.push_str(&format!(",{}", row[col]));
        }
        println!("{line}");
    }
    eprintln!(
        "window {window}: {} feature(s) of {} shown",
        ranked.len(),
        qdda.features.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn mitigate(
    config: &ConfigArg,
    input: &Path,
    window: i64,
    map_out: Option<&Path>,
    disadvantaged: Option<&str>,
    apply: bool,
    out: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let config = config.load()?;
    let events = read_events_from_path(input)?;
    let window_events: Vec<PredictionEvent> = events
        .iter()
        .filter(|e| {
            e.ts_ms.div_euclid(config.window_ms) == window && e.matches_all(&config.condition)
        })
        .cloned()
        .collect();
    if window_events.is_empty() {
        return Err(CliError::Data(format!("no events fall into window {window}")));
    }
    let target_group = config.target_group();
    let reference_group = config.reference_group();
    let build = |group: &faircanary_core::metrics::GroupKey| -> Result<ScoreSample, CliError> {
        faircanary_core::metrics::sample_for_group(&window_events, group)
            .map_err(|e| CliError::Data(format!("group {group}: {e}")))
    };
    let target = build(&target_group)?;
    let reference = build(&reference_group)?;

    let disadvantaged_group = match disadvantaged {
        Some(value) if value == target_group.value => target_group.clone(),
        Some(value) if value == reference_group.value => reference_group.clone(),
        Some(value) => {
            return Err(CliError::Usage(format!(
                "--disadvantaged {value} matches neither {} nor {}",
                target_group.value, reference_group.value
            )))
        }
        None => select_disadvantaged(&target, &reference).clone(),
    };
    let (d_sample, a_sample) = if disadvantaged_group == *target.group() {
        (&target, &reference)
    } else {
        (&reference, &target)
    };
    let map = quantile_norm(d_sample, a_sample);

    let csv = map.to_csv();
    match map_out {
        Some(path) => std::fs::write(path, &csv)?,
        None => print!("{csv}"),
    }
    let changed = map
        .entries
        .iter()
        .filter(|e| e.original_score != e.mitigated_score)
        .count();
    eprintln!(
        "window {window}: {} score(s) mapped for group {} ({} changed)",
        map.entries.len(),
        disadvantaged_group,
        changed
    );

    if apply {
        let out = out.expect("clap enforces --out with --apply");
        let mitigated =
            apply_mitigation(&events, &map).map_err(|e| CliError::Data(e.to_string()))?;
        let file = std::fs::File::create(out)?;
        let mut writer = std::io::BufWriter::new(file);
        write_events(&mut writer, &mitigated)?;
        writer.flush()?;
        eprintln!("mitigated event file written to {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn compare_metrics(
    config: &ConfigArg,
    input: &Path,
    thresholds: &[f64],
) -> Result<ExitCode, CliError> {
    if thresholds.is_empty() {
        return Err(CliError::Usage(
            "--thresholds requires at least one value".to_string(),
        ));
    }
    let mut config = config.load()?;
    config.thresholds = thresholds.to_vec();
    let events = read_events_from_path(input)?;
    let reports = replay_events(&config, events)?;

    println!("window_id,threshold,spd,di,spd_flag,di_flag");
    for report in &reports {
        for row in &report.threshold_rows {
            println!(
                "{},{},{},{},{},{}",
                report.window_id,
                row.threshold,
                row.spd,
                row.di.map(|d| d.to_string()).unwrap_or_default(),
                row.flags.spd,
                row.flags.di
            );
        }
    }
    eprintln!(
        "{} window(s) x {} threshold(s)",
        reports.len(),
        thresholds.len()
    );
    Ok(ExitCode::SUCCESS)
}
