//! Filter grids as binary PGM.
//!
//! Layout, byte for byte:
//!
//! * header `P5\n<width> <height>\n255\n`, then one byte per pixel, rows top
//!   to bottom;
//! * `n` filters (dictionary columns) are placed row-major on a grid with
//!   `cols = ceil(sqrt(n))` and `rows = ceil(n / cols)`;
//! * each filter is reshaped row-major to `H×W`;
//! * tiles are separated, and the whole grid framed, by 1-pixel black (0)
//!   lines, so `width = cols·W + cols + 1` and `height = rows·H + rows + 1`;
//!   unused grid cells stay black;
//! * each filter is min-max scaled on its own to `round(255·(v − min) /
//!   (max − min))`; a filter with `max == min` is drawn uniformly at 128.

use anyhow::{bail, Result};
use ksae_core::tensor::Matrix;

use crate::args::TileShape;

pub const ZERO_RANGE_GRAY: u8 = 128;

/// `(rows, cols)` of the grid for `n` tiles.
pub fn grid_dims(n: usize) -> (usize, usize) {
    let mut cols = 0;
    while cols * cols < n {
        cols += 1;
    }
    let rows = if cols == 0 { 0 } else { n.div_ceil(cols) };
    (rows, cols)
}

fn scale_filter(values: &[f64]) -> Vec<u8> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return vec![ZERO_RANGE_GRAY; values.len()];
    }
    values
        .iter()
        .map(|v| (255.0 * (v - min) / (max - min)).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Renders the columns of `w` as tiles of `shape`.
pub fn filter_grid(w: &Matrix, shape: TileShape) -> Result<Vec<u8>> {
    let TileShape { rows: th, cols: tw } = shape;
    if th * tw != w.rows() {
        bail!(
            "filters of length {} cannot be reshaped to {}x{}",
            w.rows(),
            th,
            tw
        );
    }
    if w.cols() == 0 {
        bail!("no filters to draw");
    }
    if !w.is_finite() {
        bail!("filters contain non-finite values");
    }
    let n = w.cols();
    let (gr, gc) = grid_dims(n);
    let width = gc * tw + gc + 1;
    let height = gr * th + gr + 1;
    let mut pixels = vec![0u8; width * height];
    for f in 0..n {
        let tile = scale_filter(&w.column(f));
        let top = 1 + (f / gc) * (th + 1);
        let left = 1 + (f % gc) * (tw + 1);
        for r in 0..th {
            let start = (top + r) * width + left;
            pixels[start..start + tw].copy_from_slice(&tile[r * tw..(r + 1) * tw]);
        }
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}

/// A square tile shape for filters of length `len`, if one exists.
pub fn square_shape(len: usize) -> Option<TileShape> {
    let side = (len as f64).sqrt().round() as usize;
    (side * side == len && side > 0).then_some(TileShape { rows: side, cols: side })
}
