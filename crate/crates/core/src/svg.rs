//! Minimal SVG line charts with an optional second y axis.

use std::fmt::Write;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 80.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// One value per x position; `None` leaves a gap in the line.
    pub values: Vec<Option<f64>>,
    pub right_axis: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_title: String,
    pub x_labels: Vec<String>,
    pub left_title: String,
    pub right_title: Option<String>,
    pub series: Vec<Series>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Axis range covering the values and zero, padded by 5%.
fn range<'a>(values: impl Iterator<Item = &'a Option<f64>>) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for v in values.flatten() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    (lo - if lo < 0.0 { pad } else { 0.0 }, hi + pad)
}

impl LineChart {
    pub fn render(&self) -> String {
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let n = self.x_labels.len().max(1);
        let x_at = |i: usize| LEFT + plot_w * (i as f64 + 0.5) / n as f64;
        let left = range(self.series.iter().filter(|s| !s.right_axis).flat_map(|s| &s.values));
        let right = range(self.series.iter().filter(|s| s.right_axis).flat_map(|s| &s.values));
        let y_at = |v: f64, (lo, hi): (f64, f64)| TOP + plot_h * (1.0 - (v - lo) / (hi - lo));

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            esc(&self.title)
        );

        // axes and ticks
        let _ = writeln!(
            s,
            r##"<path d="M{LEFT:.1},{TOP:.1} V{:.1} H{:.1}" fill="none" stroke="#333"/>"##,
            TOP + plot_h,
            LEFT + plot_w
        );
        for k in 0..=4 {
            let v = left.0 + (left.1 - left.0) * k as f64 / 4.0;
            let y = y_at(v, left);
            let _ = writeln!(
                s,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
                LEFT,
                LEFT + plot_w,
                LEFT - 6.0,
                y + 4.0
            );
        }
        if left.0 < 0.0 {
            let y = y_at(0.0, left);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
                LEFT + plot_w
            );
        }
        if let Some(title) = &self.right_title {
            let xr = LEFT + plot_w;
            let _ = writeln!(s, r##"<path d="M{xr:.1},{TOP:.1} V{:.1}" stroke="#333"/>"##, TOP + plot_h);
            for k in 0..=4 {
                let v = right.0 + (right.1 - right.0) * k as f64 / 4.0;
                let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{v:.2}</text>"#, xr + 6.0, y_at(v, right) + 4.0);
            }
            let _ = writeln!(
                s,
                r#"<text transform="translate({:.1},{:.1}) rotate(90)" text-anchor="middle">{}</text>"#,
                WIDTH - 18.0,
                TOP + plot_h / 2.0,
                esc(title)
            );
        }
        for (i, label) in self.x_labels.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                x_at(i),
                TOP + plot_h + 18.0,
                esc(label)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            HEIGHT - 30.0,
            esc(&self.x_title)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate(18,{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            TOP + plot_h / 2.0,
            esc(&self.left_title)
        );

        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let axis = if series.right_axis { right } else { left };
            let dash = if series.right_axis { r#" stroke-dasharray="6 3""# } else { "" };
            let mut d = String::new();
            let mut pen_down = false;
            for (i, v) in series.values.iter().enumerate() {
                match v {
                    Some(v) => {
                        let _ = write!(d, "{}{:.1},{:.1} ", if pen_down { "L" } else { "M" }, x_at(i), y_at(*v, axis));
                        pen_down = true;
                    }
                    None => pen_down = false,
                }
            }
            if !d.is_empty() {
                let _ = writeln!(
                    s,
                    r#"<path d="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
                    d.trim_end()
                );
            }
            for (i, v) in series.values.iter().enumerate() {
                if let Some(v) = v {
                    let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, x_at(i), y_at(*v, axis));
                }
            }
            let ly = TOP + 14.0 + 16.0 * k as f64;
            let lx = LEFT + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                ly - 4.0,
                lx + 20.0,
                ly - 4.0,
                lx + 26.0,
                ly,
                esc(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
