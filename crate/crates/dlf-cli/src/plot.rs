//! Minimal SVG plotting: line charts, grouped box plots, and space-time
//! heatmaps. Everything renders from plain row data, so a plot is a pure
//! function of the CSV it came from.

use std::fmt::Write as _;

pub const KF_COLOR: &str = "#d62728";
pub const DLF_COLOR: &str = "#1f77b4";

pub struct Canvas {
    width: f64,
    height: f64,
    body: String,
}

impl Canvas {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
             viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n\
             <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{body}</svg>\n",
            w = self.width,
            h = self.height,
            body = self.body
        )
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, color: &str, width: f64) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" \
             stroke=\"{color}\" stroke-width=\"{width}\"/>"
        );
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>"
        );
    }

    pub fn rect_outline(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        let _ = writeln!(
            self.body,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" \
             fill=\"{fill}\" stroke=\"{stroke}\" stroke-width=\"1\"/>"
        );
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"none\" \
             stroke=\"{stroke}\" stroke-width=\"1.2\"/>"
        );
    }

    pub fn dot(&mut self, cx: f64, cy: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"{fill}\"/>"
        );
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], color: &str, width: f64) {
        if points.len() < 2 {
            return;
        }
        let coords: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{x:.2},{y:.2}"))
            .collect();
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"/>",
            coords.join(" ")
        );
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let escaped = content
            .replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;");
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size}\" \
             text-anchor=\"{anchor}\" fill=\"#222\">{escaped}</text>"
        );
    }
}

/// Axis mapping from data space to pixel space.
#[derive(Clone, Copy)]
pub struct Scale {
    pub lo: f64,
    pub hi: f64,
    pub px_lo: f64,
    pub px_hi: f64,
    pub log: bool,
}

impl Scale {
    pub fn map(&self, v: f64) -> f64 {
        let (lo, hi, v) = if self.log {
            (self.lo.ln(), self.hi.ln(), v.ln())
        } else {
            (self.lo, self.hi, v)
        };
        let frac = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        self.px_lo + frac * (self.px_hi - self.px_lo)
    }
}

/// Round bounds outward a little so curves do not sit on the frame.
pub fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        let pad = lo.abs().max(1e-12) * 0.1;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.06;
    (lo - pad, hi + pad)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 0.01 && a < 10000.0 {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

/// Frame with ticks on both axes; returns nothing, draws into the canvas.
pub fn draw_frame(
    canvas: &mut Canvas,
    x: Scale,
    y: Scale,
    title: &str,
    x_label: &str,
    y_label: &str,
) {
    canvas.line(x.px_lo, y.px_lo, x.px_hi, y.px_lo, "#444", 1.0);
    canvas.line(x.px_lo, y.px_lo, x.px_lo, y.px_hi, "#444", 1.0);
    canvas.text(
        (x.px_lo + x.px_hi) / 2.0,
        y.px_hi - 10.0,
        14.0,
        "middle",
        title,
    );
    canvas.text((x.px_lo + x.px_hi) / 2.0, y.px_lo + 34.0, 11.0, "middle", x_label);
    canvas.text(x.px_lo - 48.0, y.px_hi - 10.0, 11.0, "start", y_label);

    let ticks = 5usize;
    for i in 0..=ticks {
        let frac = i as f64 / ticks as f64;
        let vx = if x.log {
            (x.lo.ln() + frac * (x.hi.ln() - x.lo.ln())).exp()
        } else {
            x.lo + frac * (x.hi - x.lo)
        };
        let px = x.map(vx);
        canvas.line(px, y.px_lo, px, y.px_lo + 4.0, "#444", 1.0);
        canvas.text(px, y.px_lo + 16.0, 10.0, "middle", &tick_label(vx));

        let vy = if y.log {
            (y.lo.ln() + frac * (y.hi.ln() - y.lo.ln())).exp()
        } else {
            y.lo + frac * (y.hi - y.lo)
        };
        let py = y.map(vy);
        canvas.line(x.px_lo - 4.0, py, x.px_lo, py, "#444", 1.0);
        canvas.text(x.px_lo - 6.0, py + 3.0, 10.0, "end", &tick_label(vy));
    }
}

pub fn legend(canvas: &mut Canvas, x: f64, y: f64, entries: &[(&str, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        canvas.line(x, yy - 4.0, x + 18.0, yy - 4.0, color, 2.5);
        canvas.text(x + 24.0, yy, 11.0, "start", label);
    }
}

/// Small perceptual colormap (dark violet → teal → yellow).
pub fn colormap(frac: f64) -> String {
    const ANCHORS: [(f64, f64, f64); 7] = [
        (68.0, 1.0, 84.0),
        (70.0, 50.0, 127.0),
        (54.0, 92.0, 141.0),
        (39.0, 127.0, 142.0),
        (31.0, 161.0, 135.0),
        (110.0, 206.0, 88.0),
        (253.0, 231.0, 37.0),
    ];
    let f = frac.clamp(0.0, 1.0) * (ANCHORS.len() - 1) as f64;
    let i = (f.floor() as usize).min(ANCHORS.len() - 2);
    let t = f - i as f64;
    let lerp = |a: f64, b: f64| a + t * (b - a);
    format!(
        "rgb({:.0},{:.0},{:.0})",
        lerp(ANCHORS[i].0, ANCHORS[i + 1].0),
        lerp(ANCHORS[i].1, ANCHORS[i + 1].1),
        lerp(ANCHORS[i].2, ANCHORS[i + 1].2)
    )
}

/// Five-number box with whiskers at an x position.
#[allow(clippy::too_many_arguments)]
pub fn draw_box(
    canvas: &mut Canvas,
    cx: f64,
    half_width: f64,
    y: Scale,
    min: f64,
    q25: f64,
    median: f64,
    q75: f64,
    max: f64,
    color: &str,
) {
    let (y_min, y_q25, y_med, y_q75, y_max) =
        (y.map(min), y.map(q25), y.map(median), y.map(q75), y.map(max));
    canvas.line(cx, y_min, cx, y_q25, color, 1.0);
    canvas.line(cx, y_q75, cx, y_max, color, 1.0);
    canvas.line(cx - half_width * 0.6, y_min, cx + half_width * 0.6, y_min, color, 1.0);
    canvas.line(cx - half_width * 0.6, y_max, cx + half_width * 0.6, y_max, color, 1.0);
    canvas.rect_outline(
        cx - half_width,
        y_q75.min(y_q25),
        2.0 * half_width,
        (y_q25 - y_q75).abs().max(0.5),
        "none",
        color,
    );
    canvas.line(cx - half_width, y_med, cx + half_width, y_med, color, 2.0);
}
