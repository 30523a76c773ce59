//! Deterministic SVG emission for the analysis figures. No raster, no
//! randomness: identical inputs produce identical bytes.

use std::fmt::Write as _;

use stride_core::eval::BoxStats;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

/// Linear data-to-pixel mapping over the plot area.
pub struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    pub fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Self {
        let pad = |lo: f64, hi: f64| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 1.0, hi + 1.0)
            }
        };
        let (x_lo, x_hi) = pad(x_lo, x_hi);
        let (y_lo, y_hi) = pad(y_lo, y_hi);
        Frame { x_lo, x_hi, y_lo, y_hi }
    }

    fn x(&self, v: f64) -> f64 {
        MARGIN_L + (v - self.x_lo) / (self.x_hi - self.x_lo) * (W - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        H - MARGIN_B - (v - self.y_lo) / (self.y_hi - self.y_lo) * (H - MARGIN_T - MARGIN_B)
    }
}

/// SVG document builder.
pub struct Svg {
    body: String,
    pub frame: Frame,
}

impl Svg {
    pub fn new(frame: Frame, title: &str, x_label: &str, y_label: &str) -> Self {
        let mut svg = Svg {
            body: String::new(),
            frame,
        };
        let _ = write!(
            svg.body,
            r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#
        );
        let _ = write!(
            svg.body,
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
            W / 2.0,
            title
        );
        svg.axes(x_label, y_label);
        svg
    }

    fn axes(&mut self, x_label: &str, y_label: &str) {
        let f = &self.frame;
        let (x0, x1) = (MARGIN_L, W - MARGIN_R);
        let (y0, y1) = (H - MARGIN_B, MARGIN_T);
        let _ = write!(
            self.body,
            r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = f.x_lo + t * (f.x_hi - f.x_lo);
            let yv = f.y_lo + t * (f.y_hi - f.y_lo);
            let xp = f.x(xv);
            let yp = f.y(yv);
            let _ = write!(
                self.body,
                r#"<line x1="{xp}" y1="{y0}" x2="{xp}" y2="{}" stroke="black"/><text x="{xp}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
                y0 + 4.0,
                y0 + 18.0,
                fmt(xv)
            );
            let _ = write!(
                self.body,
                r#"<line x1="{}" y1="{yp}" x2="{x0}" y2="{yp}" stroke="black"/><text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
                x0 - 4.0,
                x0 - 7.0,
                yp + 4.0,
                fmt(yv)
            );
        }
        let _ = write!(
            self.body,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            H - 12.0,
            x_label
        );
        let _ = write!(
            self.body,
            r#"<text x="16" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            y_label
        );
    }

    /// Shaded confidence band between (x, lo) and (x, hi) vertices.
    pub fn band(&mut self, pts: &[(f64, f64, f64)], fill: &str) {
        if pts.len() < 2 {
            return;
        }
        let mut path = String::new();
        for (x, lo, _) in pts {
            let _ = write!(path, "{},{} ", fmt(self.frame.x(*x)), fmt(self.frame.y(*lo)));
        }
        for (x, _, hi) in pts.iter().rev() {
            let _ = write!(path, "{},{} ", fmt(self.frame.x(*x)), fmt(self.frame.y(*hi)));
        }
        let _ = write!(
            self.body,
            r#"<polygon points="{}" fill="{fill}" stroke="none" opacity="0.35"/>"#,
            path.trim_end()
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, dash: Option<&str>) {
        if pts.is_empty() {
            return;
        }
        let path: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{},{}", fmt(self.frame.x(*x)), fmt(self.frame.y(*y))))
            .collect();
        let dash = dash
            .map(|d| format!(r#" stroke-dasharray="{d}""#))
            .unwrap_or_default();
        let _ = write!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.8"{dash}/>"#,
            path.join(" ")
        );
    }

    pub fn markers(&mut self, pts: &[(f64, f64)], fill: &str) {
        for (x, y) in pts {
            let _ = write!(
                self.body,
                r#"<circle cx="{}" cy="{}" r="3.2" fill="{fill}"/>"#,
                fmt(self.frame.x(*x)),
                fmt(self.frame.y(*y))
            );
        }
    }

    pub fn dots(&mut self, pts: &[(f64, f64)], fill: &str) {
        for (x, y) in pts {
            let _ = write!(
                self.body,
                r#"<circle cx="{}" cy="{}" r="2.0" fill="{fill}" opacity="0.6"/>"#,
                fmt(self.frame.x(*x)),
                fmt(self.frame.y(*y))
            );
        }
    }

    /// Straight line y = slope*x + intercept clipped to the frame's x-range,
    /// carrying its data-space coefficients as attributes.
    pub fn fit_line(&mut self, slope: f64, intercept: f64, stroke: &str) {
        let f = &self.frame;
        let (xa, xb) = (f.x_lo, f.x_hi);
        let (ya, yb) = (slope * xa + intercept, slope * xb + intercept);
        let _ = write!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="1.6" data-slope="{slope}" data-intercept="{intercept}"/>"#,
            fmt(f.x(xa)),
            fmt(f.y(ya)),
            fmt(f.x(xb)),
            fmt(f.y(yb))
        );
    }

    /// One box-and-whisker glyph centered at x.
    pub fn boxplot(&mut self, x: f64, half_width: f64, stats: &BoxStats) {
        let f = &self.frame;
        let (xl, xr) = (f.x(x - half_width), f.x(x + half_width));
        let xc = f.x(x);
        let (q1, q3, med) = (f.y(stats.q1), f.y(stats.q3), f.y(stats.median));
        let (wl, wh) = (f.y(stats.whisker_lo), f.y(stats.whisker_hi));
        let _ = write!(
            self.body,
            r##"<line x1="{xc}" y1="{wl}" x2="{xc}" y2="{q1}" stroke="black"/><line x1="{xc}" y1="{q3}" x2="{xc}" y2="{wh}" stroke="black"/><rect x="{xl}" y="{q3}" width="{}" height="{}" fill="#cfe3f7" stroke="black"/><line x1="{xl}" y1="{med}" x2="{xr}" y2="{med}" stroke="black" stroke-width="1.8"/>"##,
            fmt((f.x(x + half_width) - f.x(x - half_width)).abs()),
            fmt((q1 - q3).abs()),
        );
        for o in &stats.outliers {
            let _ = write!(
                self.body,
                r#"<circle cx="{xc}" cy="{}" r="1.8" fill="none" stroke="black"/>"#,
                fmt(f.y(*o))
            );
        }
    }

    pub fn note(&mut self, x: f64, y: f64, text: &str) {
        let _ = write!(
            self.body,
            r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="11">{text}</text>"#
        );
    }

    /// Finish the document, embedding the manifest hash as a comment.
    pub fn finish(self, manifest_hash: &str) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!-- manifest: {manifest_hash} -->\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">{}</svg>\n",
            self.body
        )
    }
}
