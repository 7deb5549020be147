//! Comparison tables and SVG charts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::sampling::Temperature;
use crate::train::{mean_std, GridResult, Method, RunRecord, SuiteResult};

/// Method columns of the comparison table, in order.
pub const TABLE_COLUMNS: [(&str, Method); 6] = [
    ("MLE", Method::Mle),
    ("SS", Method::Ss),
    ("US", Method::Us),
    ("UBS - T*", Method::Ubs),
    ("PS", Method::Ps),
    ("PBS - T*", Method::Pbs),
];

/// Row groups: heading, metric key, whether values are shown in percent.
pub const TABLE_GROUPS: [(&str, &str, bool); 5] = [
    ("Likelihood", "likelihood", false),
    ("MPR (%)", "mpr", true),
    ("Prec50 (%)", "prec@50", true),
    ("Prec15 (%)", "prec@15", true),
    ("Prec5 (%)", "prec@5", true),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    /// Selected temperature for the Boltzmann columns.
    pub temperature: Option<Temperature>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub group: String,
    pub metric: String,
    pub dataset: String,
    pub cells: Vec<Option<Cell>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
    pub notes: Vec<String>,
}

fn values<'a>(runs: impl Iterator<Item = &'a RunRecord>, key: &str) -> Vec<f64> {
    runs.filter_map(|r| {
        let test = r.test.as_ref().and_then(|t| t.metric(key));
        test.or_else(|| r.final_metrics().and_then(|m| m.metric(key)))
    })
    .collect()
}

fn selection_values<'a>(runs: impl Iterator<Item = &'a RunRecord>, key: &str) -> Vec<f64> {
    runs.filter_map(|r| r.final_metrics().and_then(|m| m.metric(key))).collect()
}

/// Builds the method × metric table from a suite.
///
/// Cells report test-split means when a test split exists (validation or
/// ground-truth metrics otherwise). Where several suite entries share a
/// column's method (a temperature sweep), the entry with the best
/// validation mean is shown together with its temperature. Methods that were
/// not run are empty.
pub fn comparison_table(result: &SuiteResult) -> ComparisonTable {
    let mut datasets: Vec<&str> = Vec::new();
    for r in &result.runs {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    let mut rows = Vec::new();
    for (group, key, _) in TABLE_GROUPS {
        for ds in &datasets {
            let cells = TABLE_COLUMNS
                .iter()
                .map(|&(_, method)| {
                    let mut entries: Vec<usize> = result
                        .runs
                        .iter()
                        .filter(|r| r.dataset == *ds)
                        .filter(|r| r.record.as_ref().is_some_and(|rec| rec.config.method == method))
                        .map(|r| r.method_index)
                        .collect();
                    entries.sort_unstable();
                    entries.dedup();
                    let recs = |m: usize| {
                        result
                            .runs
                            .iter()
                            .filter(move |r| r.dataset == *ds && r.method_index == m)
                            .filter_map(|r| r.record.as_ref())
                    };
                    let mut best: Option<(usize, f64)> = None;
                    for &m in &entries {
                        let sel = selection_values(recs(m), key);
                        let score = if sel.is_empty() {
                            f64::NEG_INFINITY
                        } else {
                            mean_std(&sel).0
                        };
                        if best.is_none_or(|(_, b)| score > b) {
                            best = Some((m, score));
                        }
                    }
                    let (m, _) = best?;
                    let vals = values(recs(m), key);
                    if vals.is_empty() {
                        return None;
                    }
                    let (mean, std) = mean_std(&vals);
                    let temperature = method
                        .uses_temperature()
                        .then(|| recs(m).next().map(|r| r.config.temperature))
                        .flatten();
                    Some(Cell {
                        mean,
                        std,
                        n: vals.len(),
                        temperature,
                    })
                })
                .collect();
            rows.push(TableRow {
                group: group.to_owned(),
                metric: key.to_owned(),
                dataset: (*ds).to_owned(),
                cells,
            });
        }
    }
    let mut notes = vec![
        "learning rate, optimizer, schedule and training budget are configuration choices of these runs".to_owned(),
        "cells are means over seeds; T* is chosen per row on the validation split".to_owned(),
    ];
    if let Some(rec) = result.runs.iter().find_map(|r| r.record.as_ref()) {
        notes.extend(rec.notes.iter().cloned());
    }
    ComparisonTable {
        columns: TABLE_COLUMNS.iter().map(|c| c.0.to_owned()).collect(),
        rows,
        notes,
    }
}

fn percent(metric: &str) -> bool {
    TABLE_GROUPS.iter().any(|g| g.1 == metric && g.2)
}

impl ComparisonTable {
    /// Fixed-width text rendering with group headings.
    pub fn to_text(&self) -> String {
        let width = 16;
        let mut s = String::new();
        let _ = write!(s, "{:<14}", "Method");
        for c in &self.columns {
            let _ = write!(s, "| {c:<width$}");
        }
        s.push('\n');
        s.push_str(&"=".repeat(14 + self.columns.len() * (width + 2)));
        s.push('\n');
        let mut group = "";
        for r in &self.rows {
            if r.group != group {
                group = &r.group;
                let _ = writeln!(s, "{group}");
                s.push_str(&"-".repeat(14 + self.columns.len() * (width + 2)));
                s.push('\n');
            }
            let _ = write!(s, "{:<14}", r.dataset);
            let scale = if percent(&r.metric) { 100.0 } else { 1.0 };
            for c in &r.cells {
                let text = match c {
                    None => "n/a".to_owned(),
                    Some(c) => {
                        let v = if scale == 1.0 {
                            format!("{:.3e}", c.mean)
                        } else {
                            format!("{:.2}", c.mean * scale)
                        };
                        match c.temperature {
                            Some(t) => format!("{v} - {t}"),
                            None => v,
                        }
                    }
                };
                let _ = write!(s, "| {text:<width$}");
            }
            s.push('\n');
        }
        for n in &self.notes {
            let _ = writeln!(s, "# {n}");
        }
        s
    }

    /// `group,dataset,method,mean,std,n,temperature` rows (raw values).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("group,dataset,method,mean,std,n,temperature\n");
        for r in &self.rows {
            for (col, c) in self.columns.iter().zip(&r.cells) {
                if let Some(c) = c {
                    let t = c.temperature.map(|t| t.to_string()).unwrap_or_default();
                    let _ = writeln!(s, "{},{},{},{},{},{},{}", r.metric, r.dataset, col, c.mean, c.std, c.n, t);
                }
            }
        }
        s
    }
}

/// One polyline of a chart.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal SVG line chart with markers, axis ticks and a legend. Points
/// with non-finite coordinates (or non-positive `x` on a log axis) are
/// dropped.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_x || *x > 0.0))
                .map(|&(x, y)| (tx(x), y))
                .collect()
        })
        .collect();
    let all: Vec<(f64, f64)> = pts.iter().flatten().copied().collect();
    let (mut x0, mut x1, mut y0, mut y1) = all.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if all.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (left + w - right) / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{left}" y1="{top}" x2="{left}" y2="{0}" stroke="black"/>"#,
        h - bottom,
        w - right
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let xl = if log_x { 10f64.powf(fx) } else { fx };
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            px(fx),
            h - bottom + 16.0,
            format_tick(xl)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            py(fy) + 4.0,
            format_tick(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (left + w - right) / 2.0,
        h - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (top + h - bottom) / 2.0,
        escape(y_label)
    );
    for (k, (ser, p)) in series.iter().zip(&pts).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for &(x, y) in p {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = top + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            w - right + 10.0,
            ly,
            w - right + 26.0,
            ly + 5.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_owned()
    }
}

/// Metric against temperature for one or more grids (infinite temperatures
/// are left out).
pub fn temperature_chart(title: &str, grids: &[(String, &GridResult)]) -> String {
    let series: Vec<Series> = grids
        .iter()
        .map(|(name, g)| Series {
            name: name.clone(),
            points: g
                .rows
                .iter()
                .filter_map(|r| Some((r.temperature.as_f64(), r.value?)))
                .collect(),
        })
        .collect();
    let metric = grids.first().map(|g| g.1.metric.to_string()).unwrap_or_default();
    line_chart(title, "temperature", &metric, &series, true)
}

/// A snapshot metric against training steps, one series per run.
pub fn steps_chart(title: &str, metric: &str, runs: &[&RunRecord]) -> String {
    let series: Vec<Series> = runs
        .iter()
        .map(|r| Series {
            name: r.label.clone(),
            points: r
                .snapshots
                .iter()
                .filter_map(|s| Some((s.step as f64, s.metrics.metric(metric)?)))
                .collect(),
        })
        .collect();
    line_chart(title, "step", metric, &series, false)
}
