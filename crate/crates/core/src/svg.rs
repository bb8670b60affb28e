//! Minimal SVG writer for line plots, quiver plots and hypographs.

use std::fmt::Write as _;

/// Data-to-pixel canvas; the y axis points up in data coordinates.
#[derive(Debug, Clone)]
pub struct Canvas {
    width: f64,
    height: f64,
    margin: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
    body: String,
}

/// A fixed palette cycled by series index.
pub const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

impl Canvas {
    /// A canvas of `width × height` pixels showing the given data ranges.
    pub fn new(width: f64, height: f64, x_range: (f64, f64), y_range: (f64, f64)) -> Canvas {
        let widen = |(a, b): (f64, f64)| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        Canvas { width, height, margin: 40.0, x_range: widen(x_range), y_range: widen(y_range), body: String::new() }
    }

    fn px(&self, x: f64) -> f64 {
        let (a, b) = self.x_range;
        self.margin + (x - a) / (b - a) * (self.width - 2.0 * self.margin)
    }

    fn py(&self, y: f64) -> f64 {
        let (a, b) = self.y_range;
        self.height - self.margin - (y - a) / (b - a) * (self.height - 2.0 * self.margin)
    }

    /// Draws the bounding box with the range extremes as tick labels.
    pub fn axes(&mut self, x_label: &str, y_label: &str) {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        let (l, r, t, b) = (self.px(x0), self.px(x1), self.py(y1), self.py(y0));
        let _ = writeln!(
            self.body,
            r##"<rect x="{l:.2}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
            r - l,
            b - t
        );
        let fs = 11;
        let _ = writeln!(self.body, r#"<text x="{l:.2}" y="{:.2}" font-size="{fs}">{x0:.3}</text>"#, b + 14.0);
        let _ = writeln!(self.body, r#"<text x="{:.2}" y="{:.2}" font-size="{fs}" text-anchor="end">{x1:.3}</text>"#, r, b + 14.0);
        let _ = writeln!(self.body, r#"<text x="{:.2}" y="{:.2}" font-size="{fs}" text-anchor="end">{y0:.3}</text>"#, l - 4.0, b);
        let _ = writeln!(self.body, r#"<text x="{:.2}" y="{:.2}" font-size="{fs}" text-anchor="end">{y1:.3}</text>"#, l - 4.0, t + 10.0);
        let _ = writeln!(self.body, r#"<text x="{:.2}" y="{:.2}" font-size="{fs}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, b + 28.0, escape(x_label));
        let _ = writeln!(self.body, r#"<text x="{:.2}" y="{:.2}" font-size="{fs}">{}</text>"#, l, t - 8.0, escape(y_label));
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64) {
        if points.is_empty() {
            return;
        }
        let mut d = String::new();
        for (x, y) in points {
            let _ = write!(d, "{:.2},{:.2} ", self.px(*x), self.py(*y));
        }
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            d.trim_end()
        );
    }

    pub fn polygon(&mut self, points: &[(f64, f64)], fill: &str, opacity: f64) {
        let mut d = String::new();
        for (x, y) in points {
            let _ = write!(d, "{:.2},{:.2} ", self.px(*x), self.py(*y));
        }
        let _ = writeln!(self.body, r#"<polygon points="{}" fill="{fill}" fill-opacity="{opacity}" stroke="none"/>"#, d.trim_end());
    }

    pub fn segment(&mut self, a: (f64, f64), b: (f64, f64), stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{stroke}" stroke-width="{width}"/>"#,
            self.px(a.0),
            self.py(a.1),
            self.px(b.0),
            self.py(b.1)
        );
    }

    /// An arrow from `at` along `v` (both in data units) with a small head.
    pub fn arrow(&mut self, at: (f64, f64), v: (f64, f64), stroke: &str) {
        let (x0, y0) = (self.px(at.0), self.py(at.1));
        let (x1, y1) = (self.px(at.0 + v.0), self.py(at.1 + v.1));
        let (dx, dy) = (x1 - x0, y1 - y0);
        let len = (dx * dx + dy * dy).sqrt();
        if len < 1e-9 {
            return;
        }
        let (ux, uy) = (dx / len, dy / len);
        let head = (0.3 * len).min(5.0);
        let (hx1, hy1) = (x1 - head * (ux - 0.5 * uy), y1 - head * (uy + 0.5 * ux));
        let (hx2, hy2) = (x1 - head * (ux + 0.5 * uy), y1 - head * (uy - 0.5 * ux));
        let _ = writeln!(
            self.body,
            r#"<path d="M{x0:.2},{y0:.2} L{x1:.2},{y1:.2} M{hx1:.2},{hy1:.2} L{x1:.2},{y1:.2} L{hx2:.2},{hy2:.2}" fill="none" stroke="{stroke}" stroke-width="0.8"/>"#
        );
    }

    pub fn circle(&mut self, at: (f64, f64), radius_px: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{:.2}" cy="{:.2}" r="{radius_px}" fill="{fill}"/>"#, self.px(at.0), self.py(at.1));
    }

    /// Text anchored at a data point.
    pub fn label(&mut self, at: (f64, f64), text: &str, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{fill}">{}</text>"#,
            self.px(at.0),
            self.py(at.1) + 4.0,
            escape(text)
        );
    }

    pub fn title(&mut self, text: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{:.2}" y="16" font-size="13" text-anchor="middle">{}</text>"#,
            self.width / 2.0,
            escape(text)
        );
    }

    /// The complete document.
    pub fn finish(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_is_well_formed_and_deterministic() {
        let mut c = Canvas::new(200.0, 100.0, (0.0, 1.0), (0.0, 2.0));
        c.axes("t", "x < 1 & y");
        c.polyline(&[(0.0, 0.0), (1.0, 2.0)], color(0), 1.0);
        c.arrow((0.5, 1.0), (0.1, 0.1), color(1));
        let a = c.finish();
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("x &lt; 1 &amp; y"));
        assert_eq!(a, c.finish());
    }

    #[test]
    fn corners_map_inside_the_margins() {
        let c = Canvas::new(200.0, 100.0, (0.0, 1.0), (0.0, 1.0));
        assert_eq!(c.px(0.0), 40.0);
        assert_eq!(c.px(1.0), 160.0);
        assert_eq!(c.py(0.0), 60.0);
        assert_eq!(c.py(1.0), 40.0);
    }
}
