//! Minimal self-contained SVG scatter plots.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::cluster_eval::Labeling;
use crate::error::{Error, Result};
use crate::io::format_f64;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 30.0;
const RADIUS: f64 = 3.0;

/// Tableau-10 colors; labels beyond ten cycle.
const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

/// Scatter of the first two columns of `coords`, one `<circle>` per row,
/// colored by `labels` when given. A single column is plotted against the
/// row index.
pub fn scatter_svg(coords: &Array2<f64>, labels: Option<&Labeling>) -> Result<String> {
    let n = coords.nrows();
    if coords.ncols() == 0 {
        return Err(Error::invalid("nothing to plot: embedding has no columns"));
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: l.len() });
        }
    }
    let xy: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            if coords.ncols() >= 2 {
                (coords[[i, 0]], coords[[i, 1]])
            } else {
                (i as f64, coords[[i, 0]])
            }
        })
        .collect();
    let range = |sel: fn(&(f64, f64)) -> f64| {
        let lo = xy.iter().map(sel).fold(f64::INFINITY, f64::min);
        let hi = xy.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        (lo, span)
    };
    let (x0, xs) = range(|p| p.0);
    let (y0, ys) = range(|p| p.1);
    let inner = SIZE - 2.0 * MARGIN;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SIZE} {SIZE}" width="{SIZE}" height="{SIZE}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#).unwrap();
    for (i, (x, y)) in xy.iter().enumerate() {
        let cx = MARGIN + (x - x0) / xs * inner;
        let cy = SIZE - MARGIN - (y - y0) / ys * inner;
        let color = labels.map_or(PALETTE[0], |l| PALETTE[l.labels()[i] % PALETTE.len()]);
        writeln!(
            svg,
            r#"<circle cx="{}" cy="{}" r="{RADIUS}" fill="{color}"/>"#,
            format_f64((cx * 100.0).round() / 100.0),
            format_f64((cy * 100.0).round() / 100.0)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
