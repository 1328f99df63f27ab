//! Minimal static SVG line plots. Rendering consumes only the values
//! already written to CSV, so plots can be regenerated offline.

use std::fmt::Write as _;

const PALETTE: [&str; 8] = [
    "#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#d35400", "#16a085", "#2c3e50", "#f39c12",
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct PlotOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub zero_line: bool,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

const W: f64 = 900.0;
const H: f64 = 560.0;
const ML: f64 = 78.0; // left margin
const MR: f64 = 24.0;
const MT: f64 = 46.0;
const MB: f64 = 64.0;

impl Frame {
    fn px(&self, x: f64) -> f64 {
        ML + (x - self.x0) / (self.x1 - self.x0) * (W - ML - MR)
    }

    fn py(&self, y: f64) -> f64 {
        H - MB - (y - self.y0) / (self.y1 - self.y0) * (H - MT - MB)
    }
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let range = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        mag
    } else if norm < 3.5 {
        2.0 * mag
    } else if norm < 7.5 {
        5.0 * mag
    } else {
        10.0 * mag
    };
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * range {
        out.push(t);
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.1e}")
    }
}

/// Renders series as polylines with markers. With `log_x` the x values
/// must be positive and the axis uses decade ticks.
pub fn line_plot(series: &[Series], opts: &PlotOptions) -> String {
    let mut pts: Vec<Vec<(f64, f64)>> = Vec::new();
    for s in series {
        let cleaned: Vec<(f64, f64)> = s
            .points
            .iter()
            .copied()
            .filter(|(x, y)| {
                x.is_finite() && y.is_finite() && (!opts.log_x || *x > 0.0)
            })
            .map(|(x, y)| (if opts.log_x { x.log10() } else { x }, y))
            .collect();
        pts.push(cleaned);
    }
    let all: Vec<(f64, f64)> = pts.iter().flatten().copied().collect();
    let (mut x0, mut x1) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.0), b.max(p.0))
        });
    let (mut y0, mut y1) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.1), b.max(p.1))
        });
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
        (y0, y1) = (0.0, 1.0);
    }
    if x0 == x1 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if opts.zero_line {
        y0 = y0.min(0.0);
        y1 = y1.max(0.0);
    }
    if y0 == y1 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let xpad = 0.04 * (x1 - x0);
    let ypad = 0.06 * (y1 - y0);
    let f = Frame {
        x0: x0 - xpad,
        x1: x1 + xpad,
        y0: y0 - ypad,
        y1: y1 + ypad,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="26" font-family="sans-serif" font-size="17" text-anchor="middle">{}</text>"#,
        W / 2.0,
        opts.title
    );

    // axes
    let _ = writeln!(
        svg,
        r##"<line x1="{ML}" y1="{}" x2="{}" y2="{}" stroke="#333" stroke-width="1"/>"##,
        H - MB,
        W - MR,
        H - MB
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{}" stroke="#333" stroke-width="1"/>"##,
        H - MB
    );

    // x ticks
    if opts.log_x {
        let d0 = f.x0.floor() as i64;
        let d1 = f.x1.ceil() as i64;
        for d in d0..=d1 {
            let x = d as f64;
            if x < f.x0 || x > f.x1 {
                continue;
            }
            let px = f.px(x);
            let _ = writeln!(
                svg,
                r##"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="#bbb" stroke-width="0.6"/>"##,
                MT,
                H - MB
            );
            let _ = writeln!(
                svg,
                r#"<text x="{px:.2}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">1e{d}</text>"#,
                H - MB + 20.0
            );
            // minor decade ticks
            for k in 2..10 {
                let xm = x + (k as f64).log10();
                if xm >= f.x0 && xm <= f.x1 {
                    let pxm = f.px(xm);
                    let _ = writeln!(
                        svg,
                        r##"<line x1="{pxm:.2}" y1="{}" x2="{pxm:.2}" y2="{}" stroke="#eee" stroke-width="0.5"/>"##,
                        MT,
                        H - MB
                    );
                }
            }
        }
    } else {
        for t in nice_ticks(f.x0, f.x1) {
            let px = f.px(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="#ddd" stroke-width="0.6"/>"##,
                MT,
                H - MB
            );
            let _ = writeln!(
                svg,
                r#"<text x="{px:.2}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
                H - MB + 20.0,
                fmt_tick(t)
            );
        }
    }

    // y ticks
    for t in nice_ticks(f.y0, f.y1) {
        let py = f.py(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{ML}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#ddd" stroke-width="0.6"/>"##,
            W - MR
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="end">{}</text>"#,
            ML - 8.0,
            py + 4.0,
            fmt_tick(t)
        );
    }

    if opts.zero_line && f.y0 < 0.0 && f.y1 > 0.0 {
        let py = f.py(0.0);
        let _ = writeln!(
            svg,
            r##"<line x1="{ML}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#333" stroke-width="1" stroke-dasharray="6,4"/>"##,
            W - MR
        );
    }

    // axis labels
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        ML + (W - ML - MR) / 2.0,
        H - 16.0,
        opts.x_label
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{}" font-family="sans-serif" font-size="15" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
        MT + (H - MT - MB) / 2.0,
        MT + (H - MT - MB) / 2.0,
        opts.y_label
    );

    // series
    for (i, (s, cleaned)) in series.iter().zip(&pts).enumerate() {
        if cleaned.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = cleaned
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", f.px(*x), f.py(*y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            path.join(" ")
        );
        for (x, y) in cleaned {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                f.px(*x),
                f.py(*y)
            );
        }
        // legend entry
        let ly = MT + 8.0 + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly:.2}" x2="{}" y2="{ly:.2}" stroke="{color}" stroke-width="2.5"/>"#,
            ML + 12.0,
            ML + 40.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="13">{}</text>"#,
            ML + 47.0,
            ly + 4.0,
            s.name
        );
    }

    svg.push_str("</svg>\n");
    svg
}
