use std::fmt::Write as _;
use std::str::FromStr;

use super::{Aggregate, BenchmarkReport, Relative, Stat};
use crate::calibrators::Method;
use crate::error::{CalibError, Result};
use crate::wrappers::Wrapper;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(CalibError::UnknownName {
                kind: "report format",
                value: s.into(),
                expected: "csv, json, markdown",
            }),
        }
    }
}

/// Renders a report. CSV has one row per (method, wrapper, fold) cell with
/// raw values; JSON is the full report; markdown shows the relative tables.
pub fn render_report(report: &BenchmarkReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Csv => Ok(render_csv(report)),
        ReportFormat::Markdown => Ok(render_markdown(report)),
    }
}

fn render_csv(report: &BenchmarkReport) -> String {
    let mut out = String::from("method,wrapper,fold,ece,cwece,accuracy,nll,condition_mass");
    for k in 1..=report.n_classes {
        let _ = write!(out, ",cwece_class_{k}");
    }
    out.push('\n');
    for c in &report.cells {
        let mass = c.condition_mass.map(|m| m.to_string()).unwrap_or_default();
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.method,
            c.wrapper,
            c.fold + 1,
            c.ece,
            c.cwece,
            c.accuracy,
            c.nll,
            mass
        );
        for v in &c.cwece_per_class {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// `-54.45% ± 8%`
pub fn format_relative(r: Option<Relative>) -> String {
    match r {
        Some(r) => format!("{:+.2}% ± {:.0}%", r.mean, r.std),
        None => "n/a".into(),
    }
}

/// Absolute mean with the fold spread relative to it: `0.0312 ± 8%`.
fn format_absolute(s: Stat) -> String {
    if s.mean == 0.0 {
        return format!("{:.4} ± 0%", s.mean);
    }
    format!("{:.4} ± {:.0}%", s.mean, s.std / s.mean * 100.0)
}

fn metric_table(
    out: &mut String,
    report: &BenchmarkReport,
    wrappers: &[Wrapper],
    title: &str,
    stat: fn(&Aggregate) -> Stat,
    rel: fn(&Aggregate) -> Option<Relative>,
) {
    let _ = writeln!(out, "### {title}\n");
    let _ = write!(out, "| method |");
    for w in wrappers {
        let _ = write!(out, " {w} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(wrappers.len()));
    out.push('\n');

    let overall_best = report
        .aggregates
        .iter()
        .map(|a| stat(a).mean)
        .fold(f64::INFINITY, f64::min);
    let methods: &[Method] = &report.spec.methods;
    for &m in methods {
        let row: Vec<&Aggregate> = wrappers
            .iter()
            .filter_map(|&w| report.aggregate(m, w))
            .collect();
        let row_best = row
            .iter()
            .map(|a| stat(a).mean)
            .fold(f64::INFINITY, f64::min);
        let _ = write!(out, "| {m} |");
        for a in row {
            let mut cell = if a.wrapper == Wrapper::Baseline {
                format_absolute(stat(a))
            } else {
                format_relative(rel(a))
            };
            if stat(a).mean == row_best {
                cell = format!("**{cell}**");
            }
            if stat(a).mean == overall_best {
                cell.push_str(" †");
            }
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    out.push('\n');
}

fn render_markdown(report: &BenchmarkReport) -> String {
    let spec = &report.spec;
    let wrappers = spec.effective_wrappers();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "## Benchmark: {} samples, {} classes, {} folds, {} bins, p = {}, lens {}, seed {}\n",
        report.n_samples,
        report.n_classes,
        spec.folds,
        spec.binning.n_bins,
        spec.binning.p_norm,
        spec.lens,
        spec.seed
    );
    out.push_str(
        "Baseline cells show the absolute mean ± stdev as a percentage of the mean; \
         other cells show the change relative to the baseline ± stdev of per-fold relatives. \
         Bold marks the best wrapper per method, † the best score overall.\n\n",
    );
    metric_table(
        &mut out,
        report,
        &wrappers,
        "ECE",
        |a| a.ece,
        |a| a.ece_relative,
    );
    metric_table(
        &mut out,
        report,
        &wrappers,
        "cwECE",
        |a| a.cwece,
        |a| a.cwece_relative,
    );

    let lifted: Vec<&Aggregate> = report
        .aggregates
        .iter()
        .filter(|a| a.condition_mass.is_some())
        .collect();
    if !lifted.is_empty() {
        out.push_str("### Condition mass\n\n| method | wrapper | ECE | cwECE | 1-δ |\n|---|---|---|---|---|\n");
        for a in lifted {
            let mass = a.condition_mass.expect("filtered");
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.4} |",
                a.method,
                a.wrapper,
                format_relative(a.ece_relative),
                format_relative(a.cwece_relative),
                mass.mean
            );
        }
        out.push('\n');
    }
    out
}
