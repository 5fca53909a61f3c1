//! Minimal hand-written SVG charts. Every series polyline carries its raw
//! data in a `data-values` attribute so plots can be checked against the
//! CSVs they came from.

use std::fmt::Write;

use esad_core::metrics::Confusion;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axes {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub x_label: String,
    pub y_label: String,
}

impl Axes {
    pub fn unit(x_label: &str, y_label: &str) -> Self {
        Self { x: (0.0, 1.0), y: (0.0, 1.0), x_label: x_label.into(), y_label: y_label.into() }
    }

    /// Data bounds of all series, padded by 5% and never degenerate.
    pub fn fit(series: &[Series], x_label: &str, y_label: &str) -> Self {
        let pts = series.iter().flat_map(|s| s.points.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return Self::unit(x_label, y_label);
        }
        let pad = |lo: f64, hi: f64| {
            let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        Self { x: if x1 > x0 { (x0, x1) } else { pad(x0, x1) }, y: pad(y0, y1), x_label: x_label.into(), y_label: y_label.into() }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64, span: f64) -> String {
    if span >= 10.0 {
        format!("{v:.0}")
    } else if span >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

fn open(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
}

fn frame(svg: &mut String, axes: &Axes) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(svg, r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#333"/>"##, x1 - x0, y1 - y0);
    for i in 0..=5 {
        let f = f64::from(i) / 5.0;
        let xv = axes.x.0 + f * (axes.x.1 - axes.x.0);
        let yv = axes.y.0 + f * (axes.y.1 - axes.y.0);
        let (px, py) = (axes.px(xv), axes.py(yv));
        let _ = writeln!(svg, r##"<line x1="{px:.2}" y1="{y1}" x2="{px:.2}" y2="{}" stroke="#333"/>"##, y1 + 5.0);
        let _ = writeln!(svg, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, y1 + 18.0, tick_label(xv, axes.x.1 - axes.x.0));
        let _ = writeln!(svg, r##"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="#333"/>"##, x0 - 5.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 8.0, py + 4.0, tick_label(yv, axes.y.1 - axes.y.0));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 18.0, escape(&axes.x_label));
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        escape(&axes.y_label)
    );
}

/// Line chart; `reference` draws a dashed segment such as the ROC chance diagonal.
pub fn line_chart(title: &str, axes: &Axes, series: &[Series], reference: Option<[(f64, f64); 2]>) -> String {
    let mut svg = String::new();
    open(&mut svg, title);
    frame(&mut svg, axes);
    if let Some([a, b]) = reference {
        let _ = writeln!(
            svg,
            r##"<line class="reference" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="5,4"/>"##,
            axes.px(a.0),
            axes.py(a.1),
            axes.px(b.0),
            axes.py(b.1)
        );
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let values: Vec<String> = s.points.iter().map(|(x, y)| format!("{x},{y}")).collect();
        let pixels: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", axes.px(x), axes.py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-series="{}" data-values="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(&s.name),
            values.join(" "),
            pixels.join(" ")
        );
        if s.points.len() <= 60 {
            for &(x, y) in &s.points {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, axes.px(x), axes.py(y));
            }
        }
        let ly = TOP + 16.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT - 150.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    svg
}

/// 2x2 heat map, rows = actual, columns = predicted, normal first.
pub fn confusion_chart(title: &str, c: &Confusion) -> String {
    let mut svg = String::new();
    open(&mut svg, title);
    let cells = [[c.tn, c.fp], [c.fn_, c.tp]];
    let max = cells.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let names = ["normal", "anomalous"];
    let (size, x0, y0) = (160.0, 200.0, 90.0);
    for (r, row) in cells.iter().enumerate() {
        for (col, &n) in row.iter().enumerate() {
            let shade = 255.0 - 200.0 * n as f64 / max;
            let fill = format!("rgb({shade:.0},{shade:.0},255)");
            let (x, y) = (x0 + size * col as f64, y0 + size * r as f64);
            let _ = writeln!(
                svg,
                r##"<rect class="cell" data-actual="{}" data-predicted="{}" data-count="{n}" x="{x}" y="{y}" width="{size}" height="{size}" fill="{fill}" stroke="#333"/>"##,
                names[r],
                names[col]
            );
            let ink = if shade < 140.0 { "white" } else { "black" };
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="22" fill="{ink}">{n}</text>"#,
                x + size / 2.0,
                y + size / 2.0 + 8.0
            );
        }
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 10.0, y0 + size * (r as f64 + 0.5), names[r]);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, x0 + size * (r as f64 + 0.5), y0 - 10.0, names[r]);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">Predicted</text>"#, x0 + size, y0 - 30.0);
    let _ = writeln!(
        svg,
        r#"<text x="{0}" y="{1}" text-anchor="middle" transform="rotate(-90 {0} {1})">Actual</text>"#,
        x0 - 100.0,
        y0 + size
    );
    svg.push_str("</svg>\n");
    svg
}

/// Reads back the `data-values` of every series polyline: `(name, points)`.
pub fn series_values(svg: &str) -> Vec<(String, Vec<(f64, f64)>)> {
    let attr = |line: &str, key: &str| -> Option<String> {
        let start = line.find(&format!("{key}=\""))? + key.len() + 2;
        let end = start + line[start..].find('"')?;
        Some(line[start..end].to_string())
    };
    svg.lines()
        .filter(|l| l.starts_with("<polyline class=\"series\""))
        .filter_map(|l| {
            let name = attr(l, "data-series")?;
            let values = attr(l, "data-values")?;
            let pts = values
                .split_whitespace()
                .filter_map(|p| {
                    let (x, y) = p.split_once(',')?;
                    Some((x.parse().ok()?, y.parse().ok()?))
                })
                .collect();
            Some((name, pts))
        })
        .collect()
}
