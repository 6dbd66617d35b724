//! Small deterministic SVG line charts. Output depends only on the inputs:
//! no timestamps, fixed palette, coordinates rounded to two decimals.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;
const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// Missing y values break the line.
    pub points: Vec<(f64, Option<f64>)>,
    /// Dashed vertical marker, drawn in the series colour.
    pub marker_x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// Leading XML comment, e.g. provenance of the inputs.
    pub comment: Option<String>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Compact, stable tick label.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.1e}");
    }
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn linear_ticks(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let step = nice_step(hi - lo, 6);
    let start = (lo / step).floor() * step;
    let end = (hi / step).ceil() * step;
    let n = ((end - start) / step).round() as usize;
    let ticks = (0..=n).map(|i| start + i as f64 * step).collect();
    (start, end, ticks)
}

fn span(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((a, b)) => Some((a.min(v), b.max(v))),
    })
}

fn widen(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let d = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - d, hi + d)
    }
}

pub fn render(chart: &Chart) -> String {
    let finite_y = chart
        .series
        .iter()
        .flat_map(|s| s.points.iter().filter_map(|p| p.1))
        .filter(|y| y.is_finite());
    let min_positive = finite_y
        .clone()
        .filter(|&y| y > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if min_positive.is_finite() {
        min_positive
    } else {
        1.0
    };
    let mut clamped = 0usize;
    let series: Vec<Vec<(f64, Option<f64>)>> = chart
        .series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|p| p.0.is_finite())
                .map(|&(x, y)| {
                    let y = y.filter(|v| v.is_finite()).map(|v| {
                        if chart.log_y && v <= 0.0 {
                            clamped += 1;
                            floor.log10()
                        } else if chart.log_y {
                            v.log10()
                        } else {
                            v
                        }
                    });
                    (x, y)
                })
                .collect()
        })
        .collect();

    let xs = series
        .iter()
        .flatten()
        .map(|p| p.0)
        .chain(chart.series.iter().filter_map(|s| s.marker_x));
    let (x_lo, x_hi) = span(xs).map_or((0.0, 1.0), |(a, b)| widen(a, b));
    let (y_lo, y_hi) =
        span(series.iter().flatten().filter_map(|p| p.1)).map_or((0.0, 1.0), |(a, b)| widen(a, b));
    let (x0, x1, xticks) = linear_ticks(x_lo, x_hi);
    let (y0, y1, yticks) = if chart.log_y {
        let a = y_lo.floor();
        let b = y_hi.ceil().max(a + 1.0);
        (a, b, (a as i64..=b as i64).map(|e| e as f64).collect())
    } else {
        linear_ticks(y_lo, y_hi)
    };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut o = String::new();
    if let Some(c) = &chart.comment {
        let _ = writeln!(o, "<!-- {} -->", c.replace("--", "- -"));
    }
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        o,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        o,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        esc(&chart.title)
    );
    for &t in &xticks {
        let x = sx(t);
        let _ = writeln!(
            o,
            r##"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="#e6e6e6"/>"##,
            TOP + ph
        );
        let _ = writeln!(
            o,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 16.0,
            fmt_num(t)
        );
    }
    for &t in &yticks {
        let y = sy(t);
        let label = if chart.log_y {
            format!("1e{}", t as i64)
        } else {
            fmt_num(t)
        };
        let _ = writeln!(
            o,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e6e6e6"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            o,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        o,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        o,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        TOP + ph + 36.0,
        esc(&chart.x_label)
    );
    let y_label = if chart.log_y {
        format!("{} (log scale)", chart.y_label)
    } else {
        chart.y_label.clone()
    };
    let _ = writeln!(
        o,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(&y_label)
    );

    for (i, (pts, s)) in series.iter().zip(&chart.series).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for run in pts.split(|p| p.1.is_none()).filter(|r| !r.is_empty()) {
            let coords: Vec<String> = run
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y.expect("split on None"))))
                .collect();
            if coords.len() == 1 {
                let (cx, cy) = coords[0].split_once(',').unwrap();
                let _ = writeln!(o, r#"<circle cx="{cx}" cy="{cy}" r="2" fill="{color}"/>"#);
            } else {
                let _ = writeln!(
                    o,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    coords.join(" ")
                );
            }
        }
        if let Some(mx) = s.marker_x {
            let x = sx(mx);
            let _ = writeln!(
                o,
                r#"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="5,4"/>"#,
                TOP + ph
            );
        }
        let ly = TOP + 16.0 + 16.0 * i as f64;
        let lx = LEFT + pw - 170.0;
        let _ = writeln!(
            o,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0
        );
        let _ = writeln!(
            o,
            r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#,
            lx + 24.0,
            esc(&s.label)
        );
    }
    if clamped > 0 {
        let _ = writeln!(
            o,
            r#"<text x="{LEFT:.2}" y="{:.2}" font-size="11">note: {clamped} value(s) &lt;= 0 clamped to {} for the log scale</text>"#,
            HEIGHT - 10.0,
            fmt_num(floor)
        );
    }
    o.push_str("</svg>\n");
    o
}
