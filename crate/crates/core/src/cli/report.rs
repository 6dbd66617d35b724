use crate::stats::moving_average;
use crate::trainer::{config_hash, summarize, MetricRecord, RunLog, SweepReport};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write;
use std::path::Path;

use super::svg::{self, Chart, Series};
use super::{CliError, Panel, ReportSpec, XAxis};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, String)>,
    pub config_hash: String,
}

#[derive(Serialize)]
struct InputId {
    name: String,
    sha256: String,
}

/// What the report hash covers: panel settings and the input contents, not
/// where the inputs happen to live.
#[derive(Serialize)]
struct ResolvedReport<'a> {
    panels: &'a [Panel],
    smooth: Option<usize>,
    logs: Vec<InputId>,
    sweep_report: Option<InputId>,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn input_id(path: &Path, text: &str) -> InputId {
    InputId {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect(),
    }
}

fn run_label(path: &Path, log: &RunLog) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let c = &log.metadata.config;
    format!("{stem} (eta={}, S={})", c.eta, c.batch_size)
}

fn x_of(r: &MetricRecord, x: XAxis) -> f64 {
    match x {
        XAxis::Step => r.step as f64,
        XAxis::Epoch => r.epoch,
    }
}

fn smoothed(ys: Vec<Option<f64>>, window: Option<usize>) -> Vec<Option<f64>> {
    let Some(w) = window.filter(|&w| w > 1) else {
        return ys;
    };
    let present: Vec<f64> = ys.iter().flatten().copied().collect();
    let mut avg = moving_average(&present, w).into_iter();
    ys.into_iter().map(|y| y.and_then(|_| avg.next())).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.6}"))
}

fn fmt_step(v: Option<u64>) -> String {
    v.map_or("-".into(), |s| s.to_string())
}

/// Renders one SVG per panel plus `summary.md`.
pub fn build_report(spec: &ReportSpec) -> Result<ReportOutput, CliError> {
    if spec.panels.is_empty() {
        return Err(CliError::Schema {
            field: "panels".into(),
            reason: "at least one panel is required".into(),
        });
    }
    if spec.logs.is_empty() {
        return Err(CliError::Schema {
            field: "logs".into(),
            reason: "at least one log is required".into(),
        });
    }
    for (i, p) in spec.panels.iter().enumerate() {
        if !MetricRecord::METRICS.contains(&p.y.as_str()) {
            return Err(CliError::Schema {
                field: format!("panels[{i}].y"),
                reason: format!(
                    "unknown metric `{}`; known: {}",
                    p.y,
                    MetricRecord::METRICS.join(", ")
                ),
            });
        }
    }
    let mut logs = Vec::new();
    let mut ids = Vec::new();
    for (i, path) in spec.logs.iter().enumerate() {
        let text = read(path)?;
        let log = RunLog::from_jsonl(&text).map_err(|e| CliError::Schema {
            field: format!("logs[{i}]"),
            reason: e.to_string(),
        })?;
        ids.push(input_id(path, &text));
        logs.push((path.as_path(), log));
    }
    let sweep = match &spec.sweep_report {
        None => None,
        Some(p) => {
            let text = read(p)?;
            let doc: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Schema {
                    field: "sweep_report".into(),
                    reason: e.to_string(),
                })?;
            let report: SweepReport =
                serde_json::from_value(doc.get("report").cloned().unwrap_or(doc)).map_err(|e| {
                    CliError::Schema {
                        field: "sweep_report".into(),
                        reason: e.to_string(),
                    }
                })?;
            Some((input_id(p, &text), report))
        }
    };
    let hash = config_hash(&ResolvedReport {
        panels: &spec.panels,
        smooth: spec.smooth,
        logs: ids,
        sweep_report: sweep.as_ref().map(|s| InputId {
            name: s.0.name.clone(),
            sha256: s.0.sha256.clone(),
        }),
    });

    let summaries: Vec<_> = logs
        .iter()
        .map(|(_, log)| {
            summarize(
                &log.records,
                log.metadata.config.accuracy_threshold,
                log.metadata.diverged,
            )
        })
        .collect();

    let mut files = Vec::new();
    for (i, panel) in spec.panels.iter().enumerate() {
        let series = logs
            .iter()
            .zip(&summaries)
            .map(|((path, log), summary)| {
                let xs: Vec<f64> = log.records.iter().map(|r| x_of(r, panel.x)).collect();
                let ys = log
                    .records
                    .iter()
                    .map(|r| r.metric(&panel.y).flatten())
                    .collect();
                let ys = smoothed(ys, spec.smooth);
                let marker_x = summary.threshold_epoch.map(|e| match panel.x {
                    XAxis::Epoch => e,
                    XAxis::Step => e * log.metadata.steps_per_epoch as f64,
                });
                Series {
                    label: run_label(path, log),
                    points: xs.into_iter().zip(ys).collect(),
                    marker_x,
                }
            })
            .collect();
        let mut title = format!("{} vs {}", panel.y, panel.x.as_str());
        if let Some(w) = spec.smooth.filter(|&w| w > 1) {
            let _ = write!(title, " (moving average, window {w})");
        }
        let chart = Chart {
            title,
            x_label: panel.x.as_str().into(),
            y_label: panel.y.clone(),
            log_y: panel.log_y,
            series,
            comment: Some(format!("breakeven report config_hash={hash} panel={i}")),
        };
        files.push((format!("panel_{i}_{}.svg", panel.y), svg::render(&chart)));
    }

    let mut md = format!("<!-- breakeven report config_hash={hash} -->\n# Run summary\n\n");
    md.push_str(
        "| run | eta | S | momentum | max lambda_k1 (step) | max cond_ratio (step) | max lambda_h1 (step) | max trace_k | threshold epoch | first delta_loss < 0 step | diverged |\n",
    );
    md.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    for ((path, log), s) in logs.iter().zip(&summaries) {
        let c = &log.metadata.config;
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} ({}) | {} ({}) | {} ({}) | {} | {} | {} | {} |",
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            c.eta,
            c.batch_size,
            c.momentum,
            fmt_opt(s.max_lambda_k1),
            fmt_step(s.max_lambda_k1_step),
            fmt_opt(s.max_cond_ratio),
            fmt_step(s.max_cond_ratio_step),
            fmt_opt(s.max_lambda_h1),
            fmt_step(s.max_lambda_h1_step),
            fmt_opt(s.max_trace_k),
            s.threshold_epoch.map_or("-".into(), |e| format!("{e:.3}")),
            fmt_step(s.first_negative_delta_loss_step),
            if s.diverged { "yes" } else { "no" },
        );
    }
    if let Some((_, report)) = &sweep {
        let _ = write!(
            md,
            "\n# Sweep verdicts ({} axis)\n\nAggregation: {}.\n\n",
            report.axis, report.aggregation
        );
        md.push_str(
            "| metric | expected | seed means by axis value | verdict |\n|---|---|---|---|\n",
        );
        for v in &report.verdicts {
            let means: Vec<String> = report
                .values
                .iter()
                .zip(&v.seed_means)
                .map(|(x, m)| format!("{x}: {}", fmt_opt(*m)))
                .collect();
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} |",
                v.metric,
                v.expected,
                means.join("; "),
                v.overall.as_str()
            );
        }
    }
    files.push(("summary.md".into(), md));
    Ok(ReportOutput {
        files,
        config_hash: hash,
    })
}
