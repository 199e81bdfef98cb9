//! Minimal SVG line charts with CI bands on a fixed [0, 1] y-axis.

use std::fmt::Write;

use serde::Serialize;

pub const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
pub const BASELINE_COLOR: &str = "#7f7f7f";

const WIDTH: f64 = 680.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

#[derive(Clone, Debug, Serialize)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub dashed: bool,
    pub y: Vec<Option<f64>>,
    pub ci_low: Option<Vec<Option<f64>>>,
    pub ci_high: Option<Vec<Option<f64>>>,
}

/// Horizontal reference line.
#[derive(Clone, Debug, Serialize)]
pub struct Rule {
    pub label: String,
    pub y: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub x_range: (f64, f64),
    pub x_ticks: Vec<(f64, String)>,
    pub series: Vec<Series>,
    pub rules: Vec<Rule>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl Chart {
    fn px(&self, x: f64) -> f64 {
        let (a, b) = self.x_range;
        LEFT + (x - a) / (b - a) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        TOP + (1.0 - y.clamp(0.0, 1.0)) * (HEIGHT - TOP - BOTTOM)
    }

    /// Runs of consecutive defined points.
    fn segments(&self, y: &[Option<f64>]) -> Vec<Vec<(f64, f64)>> {
        let mut out = vec![Vec::new()];
        for (x, v) in self.x.iter().zip(y) {
            match v {
                Some(v) => out.last_mut().unwrap().push((*x, *v)),
                None if !out.last().unwrap().is_empty() => out.push(Vec::new()),
                None => {}
            }
        }
        out.retain(|s| !s.is_empty());
        out
    }

    pub fn to_svg(&self) -> String {
        let mut s = String::new();
        let (x0, x1) = (self.px(self.x_range.0), self.px(self.x_range.1));
        let (y0, y1) = (self.py(0.0), self.py(1.0));
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        )
        .unwrap();
        writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (x0 + x1) / 2.0, esc(&self.title)).unwrap();

        for i in 0..=10 {
            let v = i as f64 / 10.0;
            let y = self.py(v);
            writeln!(s, r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#eeeeee"/>"##).unwrap();
            writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, x0 - 6.0, y + 4.0).unwrap();
        }
        for (v, label) in &self.x_ticks {
            let x = self.px(*v);
            writeln!(s, r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333333"/>"##, y0 + 4.0).unwrap();
            writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y0 + 16.0, esc(label)).unwrap();
        }
        writeln!(s, r##"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333333"/>"##, x1 - x0, y0 - y1).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 12.0, esc(&self.x_label)).unwrap();
        writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            esc(&self.y_label)
        )
        .unwrap();

        for series in &self.series {
            let (Some(lo), Some(hi)) = (&series.ci_low, &series.ci_high) else { continue };
            let both: Vec<Option<f64>> = lo.iter().zip(hi).map(|(l, h)| l.and(*h).map(|_| 0.0)).collect();
            for seg in self.segments(&both) {
                let idx: Vec<usize> = seg.iter().map(|(x, _)| self.x.iter().position(|v| v == x).unwrap()).collect();
                let mut pts: Vec<String> = idx.iter().map(|&i| format!("{:.2},{:.2}", self.px(self.x[i]), self.py(hi[i].unwrap()))).collect();
                pts.extend(idx.iter().rev().map(|&i| format!("{:.2},{:.2}", self.px(self.x[i]), self.py(lo[i].unwrap()))));
                writeln!(s, r#"<polygon points="{}" fill="{}" fill-opacity="0.15" stroke="none"/>"#, pts.join(" "), series.color).unwrap();
            }
        }
        for rule in &self.rules {
            let y = self.py(rule.y);
            writeln!(s, r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#000000" stroke-dasharray="2,3"/>"##).unwrap();
        }
        for series in &self.series {
            let dash = if series.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            for seg in self.segments(&series.y) {
                let pts: Vec<String> = seg.iter().map(|(x, y)| format!("{:.2},{:.2}", self.px(*x), self.py(*y))).collect();
                writeln!(s, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.8"{dash}/>"#, pts.join(" "), series.color).unwrap();
                for (x, y) in &seg {
                    writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#, self.px(*x), self.py(*y), series.color).unwrap();
                }
            }
        }

        let lx = x1 + 14.0;
        let mut ly = y1 + 6.0;
        for series in &self.series {
            let dash = if series.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="1.8"{dash}/>"#, lx + 22.0, series.color).unwrap();
            writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 28.0, ly + 4.0, esc(&series.name)).unwrap();
            ly += 18.0;
        }
        for rule in &self.rules {
            writeln!(s, r##"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="#000000" stroke-dasharray="2,3"/>"##, lx + 22.0).unwrap();
            writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 28.0, ly + 4.0, esc(&rule.label)).unwrap();
            ly += 18.0;
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("chart serializes");
        s.push('\n');
        s
    }
}
