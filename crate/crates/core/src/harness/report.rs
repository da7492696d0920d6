//! CSV tables and SVG box plots for benchmark results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::benchmark::{BenchmarkReport, Method};
use super::stats;
use crate::error::Result;

pub const ERRORS_FILE: &str = "errors.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

/// One test asset's error in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub method: Method,
    pub seed: u64,
    pub missing_rate: f64,
    pub asset: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub seed: u64,
    pub missing_rate: f64,
    pub n: usize,
    pub median: Option<f64>,
    pub iqr: Option<f64>,
    pub runtime_secs: Option<f64>,
    pub chosen: Option<String>,
    pub failure: Option<String>,
}

pub fn error_rows(report: &BenchmarkReport) -> Vec<ErrorRow> {
    report
        .cells
        .iter()
        .flat_map(|c| {
            c.errors.iter().enumerate().map(|(asset, &error)| ErrorRow {
                method: c.method,
                seed: c.seed,
                missing_rate: c.missing_rate,
                asset,
                error,
            })
        })
        .collect()
}

/// One row per cell, ordered by (method, seed, missing rate) like
/// [`summarize_errors`].
pub fn summary_rows(report: &BenchmarkReport) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = report
        .cells
        .iter()
        .map(|c| SummaryRow {
            method: c.method,
            seed: c.seed,
            missing_rate: c.missing_rate,
            n: c.errors.len(),
            median: c.median,
            iqr: c.iqr,
            runtime_secs: Some(c.runtime_secs),
            chosen: c.chosen.clone(),
            failure: c.failure.clone(),
        })
        .collect();
    rows.sort_by_key(|r| key(r.method, r.seed, r.missing_rate));
    rows
}

type CellKey = (Method, u64, u64);

fn key(method: Method, seed: u64, rate: f64) -> CellKey {
    (method, seed, rate.to_bits())
}

/// Per-cell errors keyed by (method, seed, missing rate), each list in
/// ascending asset order.
fn group(rows: &[ErrorRow]) -> BTreeMap<CellKey, Vec<(usize, f64)>> {
    let mut groups: BTreeMap<CellKey, Vec<(usize, f64)>> = BTreeMap::new();
    for r in rows {
        groups
            .entry(key(r.method, r.seed, r.missing_rate))
            .or_default()
            .push((r.asset, r.error));
    }
    groups.values_mut().for_each(|v| v.sort_by_key(|&(a, _)| a));
    groups
}

/// Median and IQR per cell, recomputed from the per-asset errors.
pub fn summarize_errors(rows: &[ErrorRow]) -> Vec<SummaryRow> {
    group(rows)
        .into_iter()
        .map(|((method, seed, rate), v)| {
            let errors: Vec<f64> = v.into_iter().map(|(_, e)| e).collect();
            SummaryRow {
                method,
                seed,
                missing_rate: f64::from_bits(rate),
                n: errors.len(),
                median: stats::median(&errors),
                iqr: stats::iqr(&errors),
                runtime_secs: None,
                chosen: None,
                failure: None,
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}

/// Writes the error and summary tables plus one box plot per missing rate.
/// Returns the paths written.
pub fn write_report(dir: &Path, report: &BenchmarkReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let errors = error_rows(report);
    let mut written = vec![dir.join(ERRORS_FILE), dir.join(SUMMARY_FILE)];
    write_csv(&written[0], &errors)?;
    write_csv(&written[1], &summary_rows(report))?;
    written.extend(write_box_plots(dir, &errors)?);
    Ok(written)
}

/// Rebuilds the summary table and plots from an existing errors table.
/// Writes only into `out`.
pub fn report_from_errors(errors_csv: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let rows: Vec<ErrorRow> = read_csv(errors_csv)?;
    fs::create_dir_all(out)?;
    let summary = out.join(SUMMARY_FILE);
    write_csv(&summary, &summarize_errors(&rows))?;
    let mut written = vec![summary];
    written.extend(write_box_plots(out, &rows)?);
    Ok(written)
}

/// Five-number box summary with whiskers at the most extreme points within
/// 1.5 IQR of the quartiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    let s = stats::sorted(values);
    let q1 = stats::quantile_sorted(&s, 0.25)?;
    let median = stats::quantile_sorted(&s, 0.5)?;
    let q3 = stats::quantile_sorted(&s, 0.75)?;
    let reach = 1.5 * (q3 - q1);
    let lo = s.iter().copied().find(|&v| v >= q1 - reach).unwrap_or(q1);
    let hi = s.iter().rev().copied().find(|&v| v <= q3 + reach).unwrap_or(q3);
    Some(BoxStats { q1, median, q3, lo, hi })
}

/// One SVG per missing rate with a box per method, seeds pooled.
pub fn write_box_plots(dir: &Path, rows: &[ErrorRow]) -> Result<Vec<PathBuf>> {
    let mut by_rate: BTreeMap<u64, BTreeMap<Method, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        by_rate
            .entry(r.missing_rate.to_bits())
            .or_default()
            .entry(r.method)
            .or_default()
            .push(r.error);
    }
    let mut written = Vec::new();
    for (rate, methods) in by_rate {
        let rate = f64::from_bits(rate);
        let path = dir.join(format!("boxplot_missing_{:02}.svg", (rate * 100.0).round() as i64));
        fs::write(&path, box_plot_svg(&format!("missing rate {rate}"), &methods))?;
        written.push(path);
    }
    Ok(written)
}

fn box_plot_svg(title: &str, groups: &BTreeMap<Method, Vec<f64>>) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const LEFT: f64 = 60.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 40.0;
    let boxes: Vec<(Method, BoxStats)> = groups
        .iter()
        .filter_map(|(m, v)| Some((*m, box_stats(v)?)))
        .collect();
    let ymax = boxes.iter().map(|(_, b)| b.hi).fold(0.0_f64, f64::max).max(1e-12) * 1.05;
    let plot_h = H - TOP - BOTTOM;
    let y = |v: f64| TOP + plot_h * (1.0 - v / ymax);
    let slot = (W - LEFT - 20.0) / boxes.len().max(1) as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#,
        H - BOTTOM
    );
    for k in 0..=4 {
        let v = ymax * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            LEFT - 4.0,
            y(v) + 4.0
        );
    }
    for (i, (method, b)) in boxes.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let half = slot * 0.25;
        let _ = writeln!(
            svg,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y(b.lo),
            y(b.hi)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#9ecae1" stroke="black"/>"##,
            cx - half,
            y(b.q3),
            2.0 * half,
            (y(b.q1) - y(b.q3)).max(0.5)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(b.median),
            cx + half,
            y(b.median)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{method}</text>"#,
            H - BOTTOM + 16.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
