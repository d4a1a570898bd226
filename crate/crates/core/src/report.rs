//! Fold-level feature importance summaries and box-plot rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gbdt::{BoostedModel, ImportanceKind};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("importance report needs at least 2 fold models, got {0}")]
    TooFewFolds(usize),
    #[error("fold {fold} was trained on a different column set")]
    ColumnSetMismatch { fold: usize },
    #[error("no fold model recorded any split")]
    NoSplits,
    #[error("importance report is empty")]
    EmptyReport,
    #[error("top_n must be at least 1")]
    InvalidTopN,
}

/// Order statistics of one column's importance across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub column: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub column: String,
    /// Share of total gain covered by this column and all before it.
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub kind: ImportanceKind,
    /// Importance per fold; columns never split on have 0.
    pub per_fold: Vec<BTreeMap<String, f64>>,
    /// Sorted by median descending, then column name.
    pub summary: Vec<ColumnSummary>,
    /// Columns by descending share of fold-averaged normalized total gain.
    pub cumulative: Vec<CurvePoint>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sum after sorting, so the result does not depend on input order.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

pub fn build_importance_report(models: &[BoostedModel], kind: ImportanceKind) -> Result<ImportanceReport, ReportError> {
    if models.len() < 2 {
        return Err(ReportError::TooFewFolds(models.len()));
    }
    let mut columns = models[0].features.clone();
    columns.sort();
    for (fold, m) in models.iter().enumerate().skip(1) {
        let mut other = m.features.clone();
        other.sort();
        if other != columns {
            return Err(ReportError::ColumnSetMismatch { fold });
        }
    }
    if columns.is_empty() {
        return Err(ReportError::EmptyReport);
    }

    let dense = |map: BTreeMap<String, f64>| -> BTreeMap<String, f64> {
        columns
            .iter()
            .map(|c| (c.clone(), map.get(c).copied().unwrap_or(0.0)))
            .collect()
    };
    let per_fold: Vec<BTreeMap<String, f64>> = models.iter().map(|m| dense(m.importance(kind))).collect();
    let shares: Vec<BTreeMap<String, f64>> = models
        .iter()
        .map(|m| dense(m.normalized_importance(ImportanceKind::TotalGain)))
        .collect();

    let mut summary: Vec<ColumnSummary> = columns
        .iter()
        .map(|c| {
            let mut v: Vec<f64> = per_fold.iter().map(|f| f[c]).collect();
            v.sort_by(f64::total_cmp);
            ColumnSummary {
                column: c.clone(),
                min: v[0],
                q1: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q3: quantile(&v, 0.75),
                max: v[v.len() - 1],
            }
        })
        .collect();
    summary.sort_by(|a, b| b.median.total_cmp(&a.median).then_with(|| a.column.cmp(&b.column)));

    let k = models.len() as f64;
    let mut averaged: Vec<(String, f64)> = columns
        .iter()
        .map(|c| {
            let mut v: Vec<f64> = shares.iter().map(|f| f[c]).collect();
            (c.clone(), ordered_sum(&mut v) / k)
        })
        .collect();
    let grand = ordered_sum(&mut averaged.iter().map(|(_, v)| *v).collect::<Vec<_>>());
    if grand <= 0.0 {
        return Err(ReportError::NoSplits);
    }
    averaged.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut running = 0.0;
    let cumulative = averaged
        .into_iter()
        .map(|(column, v)| {
            running += v / grand;
            CurvePoint {
                column,
                cumulative: running,
            }
        })
        .collect();

    Ok(ImportanceReport {
        kind,
        per_fold,
        summary,
        cumulative,
    })
}

impl ImportanceReport {
    /// Summary rows as CSV.
    pub fn summary_csv(&self) -> String {
        let cum: BTreeMap<&str, f64> = self.cumulative.iter().map(|p| (p.column.as_str(), p.cumulative)).collect();
        let mut out = String::from("column,min,q1,median,q3,max,cumulative_share\n");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.column, s.min, s.q1, s.median, s.q3, s.max, cum[s.column.as_str()]
            );
        }
        out
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        crate::io::write_json(path, self)
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const WIDTH: f64 = 840.0;
const LEFT: f64 = 220.0;
const RIGHT: f64 = 40.0;
const TOP: f64 = 40.0;
const ROW: f64 = 26.0;
const BOTTOM: f64 = 60.0;

/// Horizontal box plot of the `top_n` columns by median importance.
pub fn render_box_plot(report: &ImportanceReport, top_n: usize) -> Result<String, ReportError> {
    if report.summary.is_empty() {
        return Err(ReportError::EmptyReport);
    }
    if top_n == 0 {
        return Err(ReportError::InvalidTopN);
    }
    let rows = &report.summary[..top_n.min(report.summary.len())];
    let top = rows.iter().map(|s| s.max).fold(0.0, f64::max);
    let scale_max = if top > 0.0 { top } else { 1.0 };
    let plot_w = WIDTH - LEFT - RIGHT;
    let x = |v: f64| LEFT + plot_w * v / scale_max;
    let height = TOP + ROW * rows.len() as f64 + BOTTOM;
    let axis_y = TOP + ROW * rows.len() as f64;
    let kind = match report.kind {
        ImportanceKind::AverageGain => "average gain",
        ImportanceKind::TotalGain => "total gain",
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">Feature importance across folds ({kind})</text>"#,
        WIDTH / 2.0
    );
    for (i, s) in rows.iter().enumerate() {
        let cy = TOP + ROW * (i as f64 + 0.5);
        let (y0, y1) = (cy - ROW * 0.3, cy + ROW * 0.3);
        let _ = writeln!(svg, r#"<g class="box">"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            LEFT - 8.0,
            cy,
            escape(&s.column)
        );
        let _ = writeln!(
            svg,
            r#"<line class="whisker" x1="{:.2}" y1="{cy:.2}" x2="{:.2}" y2="{cy:.2}" stroke="black"/>"#,
            x(s.min),
            x(s.max)
        );
        for v in [s.min, s.max] {
            let _ = writeln!(
                svg,
                r#"<line class="cap" x1="{0:.2}" y1="{y0:.2}" x2="{0:.2}" y2="{y1:.2}" stroke="black"/>"#,
                x(v)
            );
        }
        let _ = writeln!(
            svg,
            r#"<rect class="iqr" x="{:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="steelblue" fill-opacity="0.6" stroke="black"/>"#,
            x(s.q1),
            x(s.q3) - x(s.q1),
            y1 - y0
        );
        let _ = writeln!(
            svg,
            r#"<line class="median" x1="{0:.2}" y1="{y0:.2}" x2="{0:.2}" y2="{y1:.2}" stroke="darkred" stroke-width="2"/>"#,
            x(s.median)
        );
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{LEFT:.2}" y1="{axis_y:.2}" x2="{:.2}" y2="{axis_y:.2}" stroke="black"/>"#,
        LEFT + plot_w
    );
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{axis_y:.2}" stroke="black"/>"#
    );
    for t in 0..=4 {
        let v = scale_max * f64::from(t) / 4.0;
        let tx = x(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{tx:.2}" y1="{axis_y:.2}" x2="{tx:.2}" y2="{:.2}" stroke="black"/>"#,
            axis_y + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{tx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            axis_y + 18.0,
            tick_label(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">importance ({kind})</text>"#,
        LEFT + plot_w / 2.0,
        axis_y + 42.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">feature</text>"#,
        (TOP + axis_y) / 2.0,
        (TOP + axis_y) / 2.0
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}
