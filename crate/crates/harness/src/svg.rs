//! Minimal SVG line charts of estimates against truth.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{HarnessError, Result};
use crate::experiment::RunRecord;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#d62728", "#1f77b4", "#9467bd", "#2ca02c", "#ff7f0e", "#8c564b",
];

struct Series {
    label: String,
    colour: &'static str,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn collect(record: &RunRecord, channels: &[String]) -> Result<Vec<Series>> {
    let mut series = Vec::new();
    for (c, channel) in channels.iter().enumerate() {
        if !record.channels.contains(channel) {
            return Err(HarnessError::config(format!(
                "unknown chart channel '{channel}'"
            )));
        }
        let rows: Vec<_> = record.channel_rows(channel).collect();
        series.push(Series {
            label: format!("{channel} truth"),
            colour: "#000000",
            dashed: c > 0,
            points: rows.iter().map(|r| (r.time, r.truth)).collect(),
        });
        for (f, name) in record.filters.iter().enumerate() {
            series.push(Series {
                label: format!("{channel} {name}"),
                colour: PALETTE[f % PALETTE.len()],
                dashed: c > 0,
                points: rows.iter().map(|r| (r.time, r.estimates[f].mean)).collect(),
            });
        }
    }
    Ok(series)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        let pad = 0.1 * lo.abs().max(1.0);
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Renders the chart for `channels` as an SVG document.
pub fn render_linechart(record: &RunRecord, channels: &[String]) -> Result<String> {
    if channels.is_empty() {
        return Err(HarnessError::config("a chart needs at least one channel"));
    }
    let series = collect(record, channels)?;
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&channels.join(", "))
    );
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black"><line x1="{LEFT}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}"/></g>"#,
        b = TOP + ph,
        r = LEFT + pw
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(fx),
            TOP + ph + 16.0,
            tick(fx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="xlabel" x="{:.1}" y="{:.1}" text-anchor="middle">time</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text class="ylabel" x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">value</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (i, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash = if ser.dashed {
            r#" stroke-dasharray="6 3""#
        } else {
            ""
        };
        let _ = writeln!(
            s,
            r#"<polyline data-series="{}" fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
            escape(&ser.label),
            ser.colour,
            pts.join(" ")
        );
        let ly = TOP + 14.0 * i as f64 + 6.0;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            ser.colour,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        format!("{:.3}", v)
    }
}

pub fn emit_linechart(record: &RunRecord, channels: &[String], path: &Path) -> Result<()> {
    let doc = render_linechart(record, channels)?;
    fs::write(path, doc).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{Estimate, RunRow};

    fn record() -> RunRecord {
        let mut rows = Vec::new();
        for step in 1..=4 {
            for ch in ["x", "v"] {
                rows.push(RunRow {
                    step,
                    time: step as f64 * 0.5,
                    channel: ch.into(),
                    truth: step as f64,
                    estimates: vec![
                        Estimate {
                            mean: step as f64 + 0.1,
                            std: 0.1,
                        },
                        Estimate {
                            mean: 2.0,
                            std: 0.0,
                        },
                    ],
                });
            }
        }
        RunRecord {
            filters: vec!["enks".into(), "enkf".into()],
            channels: vec!["x".into(), "v".into()],
            rows,
        }
    }

    #[test]
    fn one_polyline_per_series() {
        let doc = render_linechart(&record(), &["x".into(), "v".into()]).unwrap();
        assert_eq!(doc.matches("<polyline").count(), 6);
        assert!(doc.contains(r#"class="xlabel""#) && doc.contains(r#"class="ylabel""#));
        assert!(doc.starts_with("<svg") && doc.trim_end().ends_with("</svg>"));
        for line in doc.lines().filter(|l| l.starts_with("<polyline")) {
            let pts = line.split("points=\"").nth(1).unwrap();
            assert_eq!(pts.split_whitespace().count(), 4);
        }
    }

    #[test]
    fn rejects_empty_or_unknown_channels() {
        assert!(render_linechart(&record(), &[]).is_err());
        assert!(render_linechart(&record(), &["k1".into()]).is_err());
    }

    #[test]
    fn flat_series_still_renders() {
        let mut rec = record();
        for r in &mut rec.rows {
            r.truth = 5.0;
            r.estimates.iter_mut().for_each(|e| e.mean = 5.0);
        }
        let doc = render_linechart(&rec, &["x".into()]).unwrap();
        assert!(!doc.contains("NaN"));
    }
}
