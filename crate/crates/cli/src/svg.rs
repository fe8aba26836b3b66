//! Minimal SVG bar charts: rectangles, axis lines and text.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub label: String,
    pub value: f64,
    /// Half-length of an error whisker.
    pub err: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    pub scale: Scale,
    pub bars: Vec<Bar>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Axis range and tick values.
fn axis(chart: &BarChart) -> (f64, f64, Vec<f64>) {
    let vals = chart.bars.iter().flat_map(|b| {
        let e = b.err.unwrap_or(0.0);
        [b.value - e, b.value + e]
    });
    match chart.scale {
        Scale::Log => {
            let pos: Vec<f64> = chart.bars.iter().map(|b| b.value).filter(|v| *v > 0.0).collect();
            let lo = pos.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = pos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = if pos.is_empty() { (0.0, 1.0) } else { (lo.log10().floor(), hi.log10().ceil()) };
            let hi = if hi <= lo { lo + 1.0 } else { hi };
            let ticks = (lo as i32..=hi as i32).map(|p| 10f64.powi(p)).collect();
            (10f64.powf(lo), 10f64.powf(hi), ticks)
        }
        Scale::Linear => {
            let (mut lo, mut hi) = vals.fold((0.0f64, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
            if hi - lo < 1e-12 {
                hi = lo + 1.0;
            }
            let step = nice_step((hi - lo) / 5.0);
            lo = (lo / step).floor() * step;
            hi = (hi / step).ceil() * step;
            let n = ((hi - lo) / step).round() as usize;
            let ticks = (0..=n).map(|i| lo + i as f64 * step).collect();
            (lo, hi, ticks)
        }
    }
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn fmt_tick(v: f64, scale: Scale) -> String {
    match scale {
        Scale::Log => {
            let p = v.log10().round() as i32;
            if (0..=3).contains(&p) {
                format!("{}", 10i64.pow(p as u32))
            } else {
                format!("1e{p}")
            }
        }
        Scale::Linear => {
            let s = format!("{v:.3}");
            let s = s.trim_end_matches('0').trim_end_matches('.');
            if s == "-0" { "0".into() } else { s.to_string() }
        }
    }
}

impl BarChart {
    pub fn render(&self) -> String {
        let (lo, hi, ticks) = axis(self);
        let plot_h = HEIGHT - TOP - BOTTOM;
        let plot_w = WIDTH - LEFT - RIGHT;
        let y = |v: f64| -> f64 {
            let t = match self.scale {
                Scale::Linear => (v - lo) / (hi - lo),
                Scale::Log => (v.max(lo).log10() - lo.log10()) / (hi.log10() - lo.log10()),
            };
            TOP + plot_h * (1.0 - t.clamp(0.0, 1.0))
        };
        let scale = match self.scale {
            Scale::Linear => "linear",
            Scale::Log => "log",
        };

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        let _ = writeln!(s, r#"<g class="y-axis" data-scale="{scale}">"#);
        let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#, TOP + plot_h);
        for t in &ticks {
            let ty = y(*t);
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#ddd"/><text class="tick" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT,
                LEFT + plot_w,
                LEFT - 6.0,
                ty + 4.0,
                fmt_tick(*t, self.scale)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            TOP + plot_h / 2.0,
            TOP + plot_h / 2.0,
            escape(&self.y_label)
        );
        let _ = writeln!(s, "</g>");

        let base = match self.scale {
            Scale::Linear => y(0.0),
            Scale::Log => TOP + plot_h,
        };
        let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{base:.2}" x2="{:.2}" y2="{base:.2}" stroke="black"/>"#, LEFT + plot_w);
        let n = self.bars.len().max(1) as f64;
        let slot = plot_w / n;
        let bw = slot * 0.6;
        for (i, b) in self.bars.iter().enumerate() {
            let cx = LEFT + slot * (i as f64 + 0.5);
            let top = y(b.value);
            let (ry, rh) = if top < base { (top, base - top) } else { (base, top - base) };
            let _ = writeln!(
                s,
                r##"<rect class="bar" data-label="{}" data-value="{}" x="{:.2}" y="{ry:.2}" width="{bw:.2}" height="{rh:.2}" fill="#4c72b0"/>"##,
                escape(&b.label),
                b.value,
                cx - bw / 2.0
            );
            if let Some(e) = b.err.filter(|e| *e > 0.0) {
                let (y1, y2) = (y(b.value - e), y(b.value + e));
                let cap = bw / 4.0;
                let _ = writeln!(
                    s,
                    r#"<g class="whisker"><line x1="{cx:.2}" y1="{y1:.2}" x2="{cx:.2}" y2="{y2:.2}" stroke="black"/><line x1="{:.2}" y1="{y1:.2}" x2="{:.2}" y2="{y1:.2}" stroke="black"/><line x1="{:.2}" y1="{y2:.2}" x2="{:.2}" y2="{y2:.2}" stroke="black"/></g>"#,
                    cx - cap,
                    cx + cap,
                    cx - cap,
                    cx + cap
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + plot_h + 18.0,
                escape(&b.label)
            );
        }
        if self.bars.is_empty() {
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">no data</text>"#, WIDTH / 2.0, TOP + plot_h / 2.0);
        }
        s.push_str("</svg>\n");
        s
    }
}
