//! Minimal SVG charts for the benchmark CSVs.

use std::fmt::Write;

use super::{FrameBenchReport, SpeedupTable};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#7b3294", "#1b7837", "#2166ac", "#b2182b", "#e08214", "#404040"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    pub color: usize,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn nice_max(v: f64) -> f64 {
    if v.is_nan() || v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if v <= m * mag {
            return m * mag;
        }
    }
    10.0 * mag
}

fn axes(out: &mut String, xlabel: &str, ylabel: &str, ymax: f64) {
    let (x0, y0, x1, y1) = (LEFT, H - BOTTOM, W - RIGHT, TOP);
    let _ = writeln!(out, r#"<path d="M{x0},{y1} V{y0} H{x1}" stroke="black" fill="none"/>"#);
    for i in 0..=4 {
        let v = ymax * i as f64 / 4.0;
        let y = y0 - (y0 - y1) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r##"<line x1="{x0}" x2="{x1}" y1="{y}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{}</text>"##,
            x0 - 6.0,
            y + 4.0,
            fmt_num(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e6 {
        format!("{:.1e}", v)
    } else if v.abs() >= 100.0 {
        format!("{:.0}", v)
    } else {
        format!("{:.2}", v)
    }
}

/// Line chart with a linear y axis from 0. `x_ticks` label the x positions.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, x_ticks: &[(f64, String)], series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let xs = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .chain(x_ticks.iter().map(|t| t.0));
    let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (xmin, xmax) = if xmin < xmax {
        (xmin, xmax)
    } else {
        (xmin - 1.0, xmin + 1.0)
    };
    let ymax = nice_max(
        series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .fold(0.0, f64::max),
    );
    axes(&mut out, xlabel, ylabel, ymax);
    let sx = |x: f64| LEFT + (W - LEFT - RIGHT) * (x - xmin) / (xmax - xmin);
    let sy = |y: f64| (H - BOTTOM) - (H - BOTTOM - TOP) * y / ymax;
    for (x, label) in x_ticks {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            sx(*x),
            H - BOTTOM + 16.0,
            escape(label)
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[s.color % COLORS.len()];
        let d: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let dash = if s.dashed { r#" stroke-dasharray="5,4""# } else { "" };
        if !d.is_empty() {
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
                d.join(" ")
            );
        }
        let ly = TOP + 16.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Vertical bar chart with a linear y axis from 0.
pub fn bar_chart(title: &str, ylabel: &str, bars: &[(String, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let ymax = nice_max(bars.iter().map(|b| b.1).fold(0.0, f64::max));
    axes(&mut out, "", ylabel, ymax);
    let slot = (W - LEFT - RIGHT) / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let h = (H - BOTTOM - TOP) * v / ymax;
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"/>"#,
            H - BOTTOM - h,
            slot * 0.7,
            COLORS[i % COLORS.len()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            x + slot * 0.35,
            H - BOTTOM + 14.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn log2_ticks(counts: impl Iterator<Item = u64>) -> Vec<(f64, String)> {
    let mut v: Vec<u64> = counts.collect();
    v.sort_unstable();
    v.dedup();
    v.into_iter()
        .map(|n| {
            let l = (n as f64).log2();
            let label = if n.is_power_of_two() {
                format!("2^{}", l as u32)
            } else {
                n.to_string()
            };
            (l, label)
        })
        .collect()
}

/// Cooperative speedup over the buffered runtime against event count, one
/// solid line per worker count plus dashed min/max bounds.
pub fn speedup_chart(table: &SpeedupTable) -> String {
    let mut workers: Vec<usize> = table.rows.iter().map(|r| r.workers).collect();
    workers.sort_unstable();
    workers.dedup();
    let mut series = Vec::new();
    for (i, w) in workers.iter().enumerate() {
        let rows: Vec<_> = table.rows.iter().filter(|r| r.workers == *w).collect();
        let pts = |f: &dyn Fn(&super::SpeedupRow) -> f64| -> Vec<(f64, f64)> {
            let mut p: Vec<(f64, f64)> = rows.iter().map(|r| ((r.event_count as f64).log2(), f(r))).collect();
            p.sort_by(|a, b| a.0.total_cmp(&b.0));
            p
        };
        series.push(Series {
            name: format!("{w} workers"),
            points: pts(&|r| r.speedup),
            dashed: false,
            color: i,
        });
        series.push(Series {
            name: format!("{w}w min"),
            points: pts(&|r| r.speedup_min),
            dashed: true,
            color: i,
        });
        series.push(Series {
            name: format!("{w}w max"),
            points: pts(&|r| r.speedup_max),
            dashed: true,
            color: i,
        });
    }
    line_chart(
        "Cooperative speedup over buffered",
        "events",
        "relative speedup",
        &log2_ticks(table.rows.iter().map(|r| r.event_count)),
        &series,
    )
}

/// Mean wall time per kind against event count, for one worker count and
/// one buffer size.
pub fn runtime_chart(table: &SpeedupTable, workers: usize, buffer_size: usize) -> String {
    let kinds: [(&str, Option<usize>, usize); 3] = [
        ("cooperative", None, workers),
        ("buffered_locked", Some(buffer_size), workers),
        ("baseline", None, 1),
    ];
    let series: Vec<Series> = kinds
        .iter()
        .enumerate()
        .map(|(i, (kind, b, w))| {
            let mut points: Vec<(f64, f64)> = table
                .cells
                .iter()
                .filter(|c| c.runtime_kind == *kind && c.buffer_size == *b && c.workers == *w)
                .map(|c| ((c.event_count as f64).log2(), c.mean_ns / 1e6))
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                name: kind.to_string(),
                points,
                dashed: *kind == "baseline",
                color: i,
            }
        })
        .collect();
    line_chart(
        &format!("Mean runtime, buffer {buffer_size}, {workers} workers"),
        "events",
        "ms",
        &log2_ticks(table.cells.iter().map(|c| c.event_count)),
        &series,
    )
}

/// Bytes copied and frames processed per scenario.
pub fn frame_charts(reports: &[FrameBenchReport]) -> (String, String) {
    let bytes: Vec<(String, f64)> = reports
        .iter()
        .map(|r| (r.scenario.to_string(), r.bytes_copied as f64 / 1e6))
        .collect();
    let fps: Vec<(String, f64)> = reports
        .iter()
        .map(|r| (r.scenario.to_string(), r.consumer_fps))
        .collect();
    (
        bar_chart("Host-to-device bytes copied", "MB", &bytes),
        bar_chart("Frames per second of consumer time", "frames/s", &fps),
    )
}
