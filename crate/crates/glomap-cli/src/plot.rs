//! Standalone SVG scatter rendering. Byte-deterministic for fixed input:
//! coordinates are formatted with fixed precision and colors come from fixed
//! tables.

use std::fmt::Write;

use anyhow::{bail, Result};
use ndarray::ArrayView2;

/// Categorical palette (cycled when there are more classes).
const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac", "#1f77b4", "#8c564b",
];

/// Five-stop colormap for scalar colors, interpolated in RGB.
const RAMP: [(f64, f64, f64); 5] = [
    (0.267, 0.005, 0.329),
    (0.229, 0.322, 0.546),
    (0.128, 0.567, 0.551),
    (0.369, 0.789, 0.383),
    (0.993, 0.906, 0.144),
];

pub enum PanelColor<'a> {
    None,
    Categorical(&'a [i64]),
    Scalar(&'a [f64]),
}

pub struct Panel<'a> {
    pub title: String,
    pub points: ArrayView2<'a, f64>,
    pub color: PanelColor<'a>,
}

fn ramp_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let lo = (t.floor() as usize).min(RAMP.len() - 2);
    let frac = t - lo as f64;
    let mix = |a: f64, b: f64| ((a + (b - a) * frac) * 255.0).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(RAMP[lo].0, RAMP[lo + 1].0),
        mix(RAMP[lo].1, RAMP[lo + 1].1),
        mix(RAMP[lo].2, RAMP[lo + 1].2)
    )
}

/// Render one or more scatter panels side by side. Every panel must be 2-D.
pub fn render(panels: &[Panel]) -> Result<String> {
    if panels.is_empty() {
        bail!("nothing to plot");
    }
    for p in panels {
        if p.points.ncols() != 2 {
            bail!("can only plot 2-D embeddings, got {} columns", p.points.ncols());
        }
    }
    const SIZE: f64 = 420.0;
    const MARGIN: f64 = 24.0;
    const TITLE_H: f64 = 22.0;
    let width = SIZE * panels.len() as f64;
    let height = SIZE + TITLE_H;

    let mut svg = String::new();
    write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n<rect width=\"{width}\" height=\"{height}\" \
         fill=\"white\"/>\n"
    )?;

    for (idx, p) in panels.iter().enumerate() {
        let x0 = idx as f64 * SIZE;
        let (mut lo_x, mut hi_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in 0..p.points.nrows() {
            lo_x = lo_x.min(p.points[[r, 0]]);
            hi_x = hi_x.max(p.points[[r, 0]]);
            lo_y = lo_y.min(p.points[[r, 1]]);
            hi_y = hi_y.max(p.points[[r, 1]]);
        }
        if !lo_x.is_finite() {
            bail!("panel {idx} has no finite points");
        }
        let span_x = (hi_x - lo_x).max(1e-12);
        let span_y = (hi_y - lo_y).max(1e-12);
        let span = span_x.max(span_y);
        let scale = (SIZE - 2.0 * MARGIN) / span;
        let cx = (lo_x + hi_x) / 2.0;
        let cy = (lo_y + hi_y) / 2.0;

        // Scalar color range.
        let (mut smin, mut smax) = (f64::INFINITY, f64::NEG_INFINITY);
        if let PanelColor::Scalar(vals) = &p.color {
            for &v in *vals {
                smin = smin.min(v);
                smax = smax.max(v);
            }
            if smax <= smin {
                smax = smin + 1.0;
            }
        }

        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\" \
             text-anchor=\"middle\">{}</text>",
            x0 + SIZE / 2.0,
            xml_escape(&p.title)
        )?;
        for r in 0..p.points.nrows() {
            let px = x0 + SIZE / 2.0 + (p.points[[r, 0]] - cx) * scale;
            let py = TITLE_H + SIZE / 2.0 - (p.points[[r, 1]] - cy) * scale;
            let color = match &p.color {
                PanelColor::None => PALETTE[0].to_string(),
                PanelColor::Categorical(labels) => {
                    PALETTE[(labels[r].rem_euclid(PALETTE.len() as i64)) as usize].to_string()
                }
                PanelColor::Scalar(vals) => ramp_color((vals[r] - smin) / (smax - smin)),
            };
            writeln!(
                svg,
                "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2\" fill=\"{color}\" \
                 fill-opacity=\"0.8\"/>"
            )?;
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
