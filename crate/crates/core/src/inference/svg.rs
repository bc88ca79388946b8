use std::fmt::Write;

use super::{Parameter, PosteriorProfile, ReferencePopulation};
use crate::error::Result;

const AXES: [Parameter; 6] = [
    Parameter::KTm,
    Parameter::G,
    Parameter::CTrab,
    Parameter::QAh,
    Parameter::FU,
    Parameter::Evp,
];
const SIZE: f64 = 400.0;
const RADIUS: f64 = 150.0;
/// A ratio of this value reaches the rim; the reference sits at half radius.
const RIM_RATIO: f64 = 2.0;
const MAX_DRAW_LINES: usize = 200;

fn point(axis: usize, ratio: f64) -> (f64, f64) {
    let r = RADIUS * (ratio / RIM_RATIO).clamp(0.0, 1.0);
    let theta =
        -std::f64::consts::FRAC_PI_2 + axis as f64 * std::f64::consts::TAU / AXES.len() as f64;
    (SIZE / 2.0 + r * theta.cos(), SIZE / 2.0 + r * theta.sin())
}

fn polygon(ratios: &[f64]) -> String {
    let mut s = String::new();
    for (i, r) in ratios.iter().enumerate() {
        let (x, y) = point(i, *r);
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:.2},{y:.2}");
    }
    s
}

/// Six-axis radar of the profile relative to the reference medians: faint
/// per-draw polygons, the median polygon and a dashed reference hexagon.
/// Output is a pure function of its inputs.
pub fn render_radar_svg(
    profile: &PosteriorProfile,
    reference: &ReferencePopulation,
) -> Result<String> {
    let refs = AXES
        .iter()
        .map(|p| reference.median(*p))
        .collect::<Result<Vec<f64>>>()?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    for (i, axis) in AXES.iter().enumerate() {
        let (x, y) = point(i, RIM_RATIO);
        let _ = writeln!(
            s,
            r##"<line x1="{c:.2}" y1="{c:.2}" x2="{x:.2}" y2="{y:.2}" stroke="#999" stroke-width="1"/>"##,
            c = SIZE / 2.0
        );
        let (lx, ly) = point(i, RIM_RATIO * 1.12);
        let _ = writeln!(
            s,
            r#"<text x="{lx:.2}" y="{ly:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            axis.label()
        );
    }
    let _ = writeln!(
        s,
        r##"<polygon points="{}" fill="none" stroke="#444" stroke-dasharray="4 3"/>"##,
        polygon(&[1.0; 6])
    );
    let n = profile.draws.len().min(MAX_DRAW_LINES);
    let _ = writeln!(
        s,
        r#"<g fill="none" stroke="steelblue" stroke-opacity="0.05">"#
    );
    for d in 0..n {
        let ratios: Vec<f64> = AXES
            .iter()
            .zip(&refs)
            .map(|(p, m)| profile.draws.get(*p)[d] / m)
            .collect();
        let _ = writeln!(s, r#"<polygon points="{}"/>"#, polygon(&ratios));
    }
    let _ = writeln!(s, "</g>");
    let medians: Vec<f64> = AXES
        .iter()
        .zip(&refs)
        .map(|(p, m)| profile.median(*p) / m)
        .collect();
    let _ = writeln!(
        s,
        r#"<polygon points="{}" fill="steelblue" fill-opacity="0.2" stroke="navy" stroke-width="2"/>"#,
        polygon(&medians)
    );
    s.push_str("</svg>\n");
    Ok(s)
}
