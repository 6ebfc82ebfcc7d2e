//! Static SVG charts written as text. Output depends only on the data, so
//! two runs over the same inputs give the same bytes.

use std::fmt::Write;

pub const BLUE: &str = "#1f77b4";
pub const RED: &str = "#d62728";
pub const GREEN: &str = "#2ca02c";
pub const ORANGE: &str = "#ff7f0e";
pub const GREY: &str = "#7f7f7f";
pub const PALETTE: [&str; 6] = [BLUE, ORANGE, GREEN, RED, "#9467bd", "#8c564b"];

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

#[derive(Debug, Clone)]
enum Mark {
    Points {
        pts: Vec<(f64, f64)>,
        r: f64,
        color: String,
        opacity: f64,
    },
    Bubbles {
        pts: Vec<(f64, f64, f64)>,
        color: String,
    },
    Line {
        pts: Vec<(f64, f64)>,
        color: String,
        width: f64,
    },
    Bars {
        /// (x centre, height, width)
        bars: Vec<(f64, f64, f64)>,
        color: String,
    },
}

#[derive(Debug, Clone)]
pub struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    hash: String,
    marks: Vec<Mark>,
    legend: Vec<(String, String)>,
    x_ticks: Option<Vec<(f64, String)>>,
    x_range: Option<(f64, f64)>,
    y_range: Option<(f64, f64)>,
}

fn fmt(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Roughly five round-number ticks covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_label(t: f64) -> String {
    if (t - t.round()).abs() < 1e-9 {
        format!("{}", t.round() as i64)
    } else {
        let s = format!("{t:.3}");
        s.trim_end_matches('0').to_string()
    }
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str, hash: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            hash: hash.into(),
            marks: Vec::new(),
            legend: Vec::new(),
            x_ticks: None,
            x_range: None,
            y_range: None,
        }
    }

    pub fn points(mut self, pts: Vec<(f64, f64)>, color: &str, r: f64, opacity: f64) -> Self {
        self.marks.push(Mark::Points {
            pts,
            r,
            color: color.into(),
            opacity,
        });
        self
    }

    /// Circles whose area grows with the third coordinate.
    pub fn bubbles(mut self, pts: Vec<(f64, f64, f64)>, color: &str) -> Self {
        self.marks.push(Mark::Bubbles { pts, color: color.into() });
        self
    }

    pub fn line(mut self, pts: Vec<(f64, f64)>, color: &str, width: f64) -> Self {
        self.marks.push(Mark::Line {
            pts,
            color: color.into(),
            width,
        });
        self
    }

    pub fn bars(mut self, bars: Vec<(f64, f64, f64)>, color: &str) -> Self {
        self.marks.push(Mark::Bars {
            bars,
            color: color.into(),
        });
        self
    }

    pub fn legend(mut self, label: &str, color: &str) -> Self {
        self.legend.push((label.into(), color.into()));
        self
    }

    pub fn x_ticks(mut self, t: Vec<(f64, String)>) -> Self {
        self.x_ticks = Some(t);
        self
    }

    pub fn x_range(mut self, lo: f64, hi: f64) -> Self {
        self.x_range = Some((lo, hi));
        self
    }

    pub fn y_range(mut self, lo: f64, hi: f64) -> Self {
        self.y_range = Some((lo, hi));
        self
    }

    fn extent(&self) -> ((f64, f64), (f64, f64)) {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        let mut see = |x: f64, y: f64| {
            if x.is_finite() && y.is_finite() {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        };
        for m in &self.marks {
            match m {
                Mark::Points { pts, .. } | Mark::Line { pts, .. } => pts.iter().for_each(|&(x, y)| see(x, y)),
                Mark::Bubbles { pts, .. } => pts.iter().for_each(|&(x, y, _)| see(x, y)),
                Mark::Bars { bars, .. } => bars.iter().for_each(|&(x, h, w)| {
                    see(x - w / 2.0, 0.0);
                    see(x + w / 2.0, h);
                }),
            }
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let pad = |lo: f64, hi: f64| {
            let d = if hi > lo { (hi - lo) * 0.04 } else { 0.5 };
            (lo - d, hi + d)
        };
        (
            self.x_range.unwrap_or_else(|| pad(x0, x1)),
            self.y_range.unwrap_or_else(|| pad(y0, y1)),
        )
    }

    pub fn render(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.extent();
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
        let inside = |x: f64, y: f64| x >= x0 && x <= x1 && y >= y0 && y <= y1;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, "<!-- config_hash: {} -->", self.hash);
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            esc(&self.title)
        );

        let _ = writeln!(s, r##"<g stroke="#dddddd" stroke-width="1">"##);
        let xt: Vec<(f64, String)> = match &self.x_ticks {
            Some(t) => t.clone(),
            None => ticks(x0, x1).into_iter().map(|t| (t, tick_label(t))).collect(),
        };
        for (t, _) in &xt {
            let _ = writeln!(s, r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}"/>"#, fmt(sx(*t)), fmt(TOP), fmt(TOP + ph));
        }
        let yt = ticks(y0, y1);
        for t in &yt {
            let _ = writeln!(s, r#"<line x1="{1}" y1="{0}" x2="{2}" y2="{0}"/>"#, fmt(sy(*t)), fmt(LEFT), fmt(LEFT + pw));
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            fmt(LEFT),
            fmt(TOP),
            fmt(pw),
            fmt(ph)
        );
        for (t, label) in &xt {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                fmt(sx(*t)),
                fmt(TOP + ph + 16.0),
                esc(label)
            );
        }
        for t in &yt {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                fmt(LEFT - 6.0),
                fmt(sy(*t) + 4.0),
                tick_label(*t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            fmt(LEFT + pw / 2.0),
            fmt(H - 18.0),
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate(18 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
            fmt(TOP + ph / 2.0),
            esc(&self.y_label)
        );

        let max_bubble = self
            .marks
            .iter()
            .filter_map(|m| match m {
                Mark::Bubbles { pts, .. } => pts.iter().map(|p| p.2).reduce(f64::max),
                _ => None,
            })
            .fold(1.0, f64::max);
        for m in &self.marks {
            match m {
                Mark::Points { pts, r, color, opacity } => {
                    let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="{opacity}">"#);
                    for &(x, y) in pts.iter().filter(|p| inside(p.0, p.1)) {
                        let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="{r}"/>"#, fmt(sx(x)), fmt(sy(y)));
                    }
                    let _ = writeln!(s, "</g>");
                }
                Mark::Bubbles { pts, color } => {
                    let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="0.4" stroke="{color}">"#);
                    for &(x, y, w) in pts.iter().filter(|p| inside(p.0, p.1)) {
                        let r = 2.0 + 10.0 * (w / max_bubble).sqrt();
                        let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="{}"/>"#, fmt(sx(x)), fmt(sy(y)), fmt(r));
                    }
                    let _ = writeln!(s, "</g>");
                }
                Mark::Line { pts, color, width } => {
                    let path: Vec<String> = pts
                        .iter()
                        .filter(|p| p.0.is_finite() && p.1.is_finite())
                        .map(|&(x, y)| format!("{},{}", fmt(sx(x)), fmt(sy(y.clamp(y0, y1)))))
                        .collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{}"/>"#,
                        path.join(" ")
                    );
                }
                Mark::Bars { bars, color } => {
                    let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="0.8">"#);
                    for &(x, h, w) in bars {
                        let (a, b) = (sy(h.max(0.0).min(y1)), sy(0f64.max(y0)));
                        let _ = writeln!(
                            s,
                            r#"<rect x="{}" y="{}" width="{}" height="{}"/>"#,
                            fmt(sx(x - w / 2.0)),
                            fmt(a.min(b)),
                            fmt(sx(x + w / 2.0) - sx(x - w / 2.0)),
                            fmt((b - a).abs())
                        );
                    }
                    let _ = writeln!(s, "</g>");
                }
            }
        }

        for (i, (label, color)) in self.legend.iter().enumerate() {
            let y = TOP + 14.0 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
                fmt(LEFT + pw - 150.0),
                fmt(y - 9.0),
                fmt(LEFT + pw - 135.0),
                fmt(y),
                esc(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_cover_the_range() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let t = ticks(-2.3, -0.4);
        assert!(t.first().unwrap() >= &-2.3 && t.last().unwrap() <= &-0.4);
        assert!(t.len() >= 3);
    }

    #[test]
    fn render_is_deterministic_and_stamped() {
        let c = Chart::new("t", "x", "y", "abc")
            .points(vec![(1.0, 2.0), (3.0, 4.0)], BLUE, 2.0, 0.5)
            .line(vec![(1.0, 2.0), (3.0, 4.0)], RED, 1.5)
            .legend("a <b>", RED);
        let a = c.render();
        assert_eq!(a, c.render());
        assert!(a.contains("config_hash: abc"));
        assert!(a.contains("a &lt;b&gt;"));
        assert_eq!(a.matches("<circle").count(), 2);
    }
}
