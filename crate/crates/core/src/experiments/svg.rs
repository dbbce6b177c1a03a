//! Minimal self-contained SVG line and scatter plots.

use std::fmt::Write as _;

use super::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Markers,
}

/// A plotted column of a table against its x column.
#[derive(Debug, Clone)]
pub struct SeriesSpec {
    pub column: String,
    pub color: &'static str,
    pub style: Style,
}

impl SeriesSpec {
    pub fn line(column: &str, color: &'static str) -> Self {
        Self {
            column: column.into(),
            color,
            style: Style::Line,
        }
    }

    pub fn markers(column: &str, color: &'static str) -> Self {
        Self {
            column: column.into(),
            color,
            style: Style::Markers,
        }
    }
}

/// A plot drawn from the columns of one table.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub file: String,
    pub table: String,
    pub title: String,
    pub x: String,
    pub series: Vec<SeriesSpec>,
    /// Horizontal reference line (e.g. product = 1).
    pub hline: Option<f64>,
    /// Columns whose values set the y range; others are clipped to it.
    pub range_from: Option<Vec<String>>,
}

const W: f64 = 720.0;
const H: f64 = 440.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 36.0;
const MB: f64 = 50.0;
const MAX_POINTS: usize = 4000;

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-300 {
        let pad = lo.abs().max(1.0) * 0.5;
        return Some((lo - pad, hi + pad));
    }
    let pad = 0.05 * (hi - lo);
    Some((lo - pad, hi + pad))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders `spec` from `table`. Returns `None` when a referenced column is
/// missing from the table.
pub fn render(spec: &PlotSpec, table: &Table) -> Option<String> {
    let xs = table.column(&spec.x)?;
    let ys: Vec<Vec<f64>> = spec
        .series
        .iter()
        .map(|s| table.column(&s.column))
        .collect::<Option<_>>()?;
    let range_cols: Vec<Vec<f64>> = match &spec.range_from {
        Some(cols) => cols
            .iter()
            .map(|c| table.column(c))
            .collect::<Option<_>>()?,
        None => ys.clone(),
    };
    let (x0, x1) = bounds(xs.iter().copied()).unwrap_or((0.0, 1.0));
    let (y0, y1) =
        bounds(range_cols.iter().flatten().copied().chain(spec.hline)).unwrap_or((0.0, 1.0));
    let px = |x: f64| ML + (x - x0) / (x1 - x0) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - y0) / (y1 - y0) * (H - MT - MB);
    let stride = xs.len().div_ceil(MAX_POINTS).max(1);

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    let cols: Vec<&str> = spec.series.iter().map(|s| s.column.as_str()).collect();
    writeln!(
        out,
        "<desc>source={} x={} y={}</desc>",
        table.file_name(),
        spec.x,
        cols.join(";")
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r##"<rect x="{ML}" y="{MT}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        W - ML - MR,
        H - MT - MB
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="22" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(&spec.title)
    )
    .unwrap();
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{:.3}</text>"#,
            px(xv),
            H - MB + 16.0,
            xv
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{:.3}</text>"#,
            ML - 6.0,
            py(yv) + 4.0,
            yv
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        (ML + W - MR) / 2.0,
        H - 10.0,
        escape(&spec.x)
    )
    .unwrap();
    if let Some(h) = spec.hline {
        writeln!(
            out,
            r##"<line x1="{ML}" x2="{}" y1="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="6,4"/>"##,
            W - MR,
            py(h),
            py(h)
        )
        .unwrap();
    }

    let inside = |y: f64| y.is_finite() && y >= y0 && y <= y1;
    for (series, values) in spec.series.iter().zip(&ys) {
        match series.style {
            Style::Line => {
                // Break the polyline wherever it leaves the plotted range.
                let mut segment = String::new();
                let flush = |seg: &mut String, out: &mut String| {
                    if seg.split(' ').count() > 1 {
                        writeln!(
                            out,
                            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                            series.color,
                            seg.trim()
                        )
                        .unwrap();
                    }
                    seg.clear();
                };
                for (x, y) in xs.iter().zip(values).step_by(stride) {
                    if inside(*y) {
                        write!(segment, "{:.2},{:.2} ", px(*x), py(*y)).unwrap();
                    } else {
                        flush(&mut segment, &mut out);
                    }
                }
                flush(&mut segment, &mut out);
            }
            Style::Markers => {
                for (x, y) in xs.iter().zip(values) {
                    if inside(*y) {
                        writeln!(
                            out,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="1.6" fill="{}"/>"#,
                            px(*x),
                            py(*y),
                            series.color
                        )
                        .unwrap();
                    }
                }
            }
        }
    }
    for (i, s) in spec.series.iter().enumerate() {
        let y = MT + 14.0 + 16.0 * i as f64;
        writeln!(
            out,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="12" fill="{}">{}</text>"#,
            ML + 10.0,
            s.color,
            escape(&s.column)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    Some(out)
}
