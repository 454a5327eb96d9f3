//! Minimal SVG line and scatter plots. CSV files are the data contract;
//! these are for a quick look.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 4] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(series: &[Series], equal: bool) -> Self {
        let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
        let span = |f: fn(&(f64, f64)) -> f64| {
            let lo = pts().map(f).fold(f64::INFINITY, f64::min);
            let hi = pts().map(f).fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (mut x, mut y) = (span(|p| p.0), span(|p| p.1));
        if equal {
            let r = (x.1 - x.0).max(y.1 - y.0) / 2.0;
            let (cx, cy) = ((x.0 + x.1) / 2.0, (y.0 + y.1) / 2.0);
            x = (cx - r, cx + r);
            y = (cy - r, cy + r);
        }
        Self { x, y }
    }

    fn px(&self, v: f64) -> f64 {
        PAD + (v - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * PAD)
    }

    fn py(&self, v: f64) -> f64 {
        H - PAD - (v - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * PAD)
    }
}

fn header(svg: &mut String, title: &str, xlabel: &str, ylabel: &str, f: &Frame) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{cx}" y="20" text-anchor="middle" font-size="14">{title}</text>
<rect x="{PAD}" y="{PAD}" width="{pw}" height="{ph}" fill="none" stroke="black"/>
<text x="{cx}" y="{xl}" text-anchor="middle">{xlabel}</text>
<text x="14" y="{cy}" text-anchor="middle" transform="rotate(-90 14 {cy})">{ylabel}</text>
<text x="{PAD}" y="{tick}" text-anchor="middle">{x0:.3}</text>
<text x="{xr}" y="{tick}" text-anchor="middle">{x1:.3}</text>
<text x="{yl}" y="{yb}" text-anchor="end">{y0:.3}</text>
<text x="{yl}" y="{yt}" text-anchor="end">{y1:.3}</text>
"#,
        cx = W / 2.0,
        cy = H / 2.0,
        pw = W - 2.0 * PAD,
        ph = H - 2.0 * PAD,
        xl = H - 12.0,
        tick = H - PAD + 16.0,
        xr = W - PAD,
        yl = PAD - 4.0,
        yb = H - PAD,
        yt = PAD + 4.0,
        x0 = f.x.0,
        x1 = f.x.1,
        y0 = f.y.0,
        y1 = f.y.1,
    );
}

fn legend(svg: &mut String, series: &[Series]) {
    for (i, s) in series.iter().enumerate() {
        let y = PAD + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{ry}" width="10" height="10" fill="{c}"/><text x="{tx}" y="{y}">{l}</text>"#,
            x = W - PAD - 110.0,
            ry = y - 9.0,
            c = COLORS[i % COLORS.len()],
            tx = W - PAD - 94.0,
            l = s.label,
        );
    }
}

pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let f = Frame::fit(series, false);
    let mut svg = String::new();
    header(&mut svg, title, xlabel, ylabel, &f);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            COLORS[i % COLORS.len()],
            pts.join(" ")
        );
    }
    legend(&mut svg, series);
    svg.push_str("</svg>\n");
    svg
}

/// Scatter in the complex plane with the unit circle for reference.
pub fn spectrum_plot(title: &str, series: &[Series]) -> String {
    let mut all: Vec<Series> = vec![Series {
        label: "",
        points: vec![(-1.05, -1.05), (1.05, 1.05)],
    }];
    all.extend(series.iter().map(|s| Series {
        label: s.label,
        points: s.points.clone(),
    }));
    let f = Frame::fit(&all, true);
    let mut svg = String::new();
    header(&mut svg, title, "Re", "Im", &f);
    let _ = writeln!(
        svg,
        r##"<ellipse cx="{}" cy="{}" rx="{}" ry="{}" fill="none" stroke="#888" stroke-dasharray="4 3"/>"##,
        f.px(0.0),
        f.py(0.0),
        f.px(1.0) - f.px(0.0),
        f.py(0.0) - f.py(1.0)
    );
    for (i, s) in series.iter().enumerate() {
        for &(x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.7"/>"#,
                f.px(x),
                f.py(y),
                COLORS[i % COLORS.len()]
            );
        }
    }
    legend(&mut svg, series);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_are_well_formed() {
        let s = [Series {
            label: "a",
            points: vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 0.5)],
        }];
        let svg = line_plot("t", "x", "y", &s);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        let svg = spectrum_plot("eig", &s);
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
