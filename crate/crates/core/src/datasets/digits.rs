//! Procedurally rendered handwritten-style digits.
//!
//! Each class has a few stroke skeletons (polylines and elliptical arcs in a
//! unit box). A sample picks a skeleton, bends it with a smooth random warp,
//! applies a random affine map (rotation, scale, shear, translation), and
//! rasterises it with anti-aliased strokes of random width. Pixels are
//! quantised to bytes so the result can be stored as IDX.

use rayon::prelude::*;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Rng};

pub const DIGIT_SIDE: usize = 28;
const CLASSES: usize = 10;

type Pt = (f64, f64);
type Stroke = Vec<Pt>;

fn line(pts: &[Pt]) -> Stroke {
    pts.to_vec()
}

/// Elliptical arc; angles in degrees, measured clockwise from +x because y
/// grows downwards.
fn arc(c: Pt, rx: f64, ry: f64, from: f64, to: f64) -> Stroke {
    let steps = (((to - from).abs() / 15.0).ceil() as usize).max(2);
    (0..=steps)
        .map(|i| {
            let a = (from + (to - from) * i as f64 / steps as f64).to_radians();
            (c.0 + rx * a.cos(), c.1 + ry * a.sin())
        })
        .collect()
}

fn join(mut a: Stroke, b: Stroke) -> Stroke {
    a.extend(b);
    a
}

fn skeletons(class: usize) -> Vec<Vec<Stroke>> {
    match class {
        0 => vec![
            vec![arc((0.5, 0.5), 0.28, 0.4, 0.0, 360.0)],
            vec![arc((0.5, 0.5), 0.2, 0.42, -80.0, 290.0)],
            vec![arc((0.5, 0.5), 0.33, 0.38, 0.0, 360.0)],
        ],
        1 => vec![
            vec![line(&[(0.5, 0.1), (0.5, 0.9)])],
            vec![line(&[(0.32, 0.28), (0.55, 0.1), (0.55, 0.9)])],
            vec![line(&[(0.35, 0.25), (0.52, 0.1), (0.52, 0.9)]), line(&[(0.32, 0.9), (0.72, 0.9)])],
        ],
        2 => vec![
            vec![join(arc((0.5, 0.32), 0.24, 0.22, 190.0, 370.0), line(&[(0.72, 0.42), (0.24, 0.9), (0.8, 0.9)]))],
            vec![join(
                arc((0.5, 0.3), 0.22, 0.2, 180.0, 400.0),
                join(arc((0.45, 0.9), 0.25, 0.2, 300.0, 180.0), line(&[(0.2, 0.9), (0.82, 0.86)])),
            )],
        ],
        3 => vec![
            vec![arc((0.48, 0.3), 0.24, 0.2, 200.0, 450.0), arc((0.48, 0.7), 0.26, 0.2, 270.0, 520.0)],
            vec![line(&[(0.25, 0.1), (0.75, 0.1), (0.45, 0.45)]), arc((0.47, 0.68), 0.27, 0.23, 260.0, 510.0)],
        ],
        4 => vec![
            vec![line(&[(0.62, 0.9), (0.62, 0.1), (0.2, 0.64), (0.82, 0.64)])],
            vec![line(&[(0.3, 0.1), (0.25, 0.55), (0.8, 0.55)]), line(&[(0.66, 0.3), (0.66, 0.9)])],
        ],
        5 => vec![
            vec![join(line(&[(0.76, 0.1), (0.32, 0.1), (0.28, 0.46)]), arc((0.47, 0.65), 0.27, 0.25, 230.0, 500.0))],
            vec![line(&[(0.34, 0.1), (0.76, 0.1)]), join(line(&[(0.34, 0.1), (0.3, 0.48)]), arc((0.5, 0.68), 0.26, 0.22, 220.0, 490.0))],
        ],
        6 => vec![
            vec![join(arc((0.62, 0.45), 0.3, 0.37, 260.0, 170.0), arc((0.5, 0.68), 0.22, 0.21, 180.0, 540.0))],
            vec![line(&[(0.66, 0.1), (0.32, 0.62)]), arc((0.5, 0.7), 0.2, 0.19, 0.0, 360.0)],
        ],
        7 => vec![
            vec![line(&[(0.2, 0.1), (0.8, 0.1), (0.42, 0.9)])],
            vec![line(&[(0.2, 0.12), (0.8, 0.1), (0.45, 0.9)]), line(&[(0.38, 0.5), (0.72, 0.5)])],
            vec![line(&[(0.2, 0.22), (0.22, 0.1), (0.8, 0.1), (0.52, 0.9)])],
        ],
        8 => vec![
            vec![arc((0.5, 0.3), 0.2, 0.19, 0.0, 360.0), arc((0.5, 0.7), 0.25, 0.21, 0.0, 360.0)],
            vec![join(arc((0.5, 0.29), 0.2, 0.18, 90.0, 360.0), arc((0.5, 0.7), 0.23, 0.22, 180.0, -180.0))],
        ],
        9 => vec![
            vec![arc((0.48, 0.32), 0.23, 0.21, 0.0, 360.0), line(&[(0.71, 0.32), (0.66, 0.9)])],
            vec![arc((0.5, 0.3), 0.22, 0.2, 0.0, 360.0), line(&[(0.72, 0.3), (0.45, 0.9)])],
        ],
        _ => unreachable!("digit class out of range"),
    }
}

/// Random appearance parameters of one sample.
#[derive(Clone, Copy, Debug)]
struct Style {
    rotation: f64,
    scale_x: f64,
    scale_y: f64,
    shear: f64,
    shift: Pt,
    width: f64,
    warp_amp: f64,
    warp_freq: f64,
    warp_phase: Pt,
}

impl Style {
    fn draw(rng: &mut Rng) -> Self {
        let scale = rng.uniform_range(0.85, 1.1);
        Self {
            rotation: rng.uniform_range(-12.0, 12.0).to_radians(),
            scale_x: scale * rng.uniform_range(0.8, 1.15),
            scale_y: scale,
            shear: rng.uniform_range(-0.25, 0.25),
            shift: (rng.uniform_range(-1.5, 1.5), rng.uniform_range(-1.5, 1.5)),
            width: rng.uniform_range(0.9, 1.8),
            warp_amp: rng.uniform_range(0.0, 0.05),
            warp_freq: rng.uniform_range(1.0, 2.5),
            warp_phase: (rng.uniform_range(0.0, 6.3), rng.uniform_range(0.0, 6.3)),
        }
    }

    /// Unit-box point to pixel coordinates on a `side × side` canvas, with
    /// the digit occupying a box of about `0.7 · side`.
    fn map(&self, p: Pt, side: f64) -> Pt {
        let w = self.warp_amp;
        let f = self.warp_freq * std::f64::consts::PI;
        let (x, y) = (
            p.0 + w * (f * p.1 + self.warp_phase.0).sin(),
            p.1 + w * (f * p.0 + self.warp_phase.1).sin(),
        );
        let (x, y) = ((x - 0.5) * self.scale_x, (y - 0.5) * self.scale_y);
        let x = x + self.shear * y;
        let (s, c) = self.rotation.sin_cos();
        let box_side = 0.7 * side;
        (
            side / 2.0 + box_side * (c * x - s * y) + self.shift.0,
            side / 2.0 + box_side * (s * x + c * y) + self.shift.1,
        )
    }
}

fn segment_distance(p: Pt, a: Pt, b: Pt) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

fn render(strokes: &[Stroke], style: &Style, side: usize, noise: f64, rng: &mut Rng) -> Vec<u8> {
    let sidef = side as f64;
    let segments: Vec<(Pt, Pt)> = strokes
        .iter()
        .flat_map(|s| {
            let mapped: Vec<Pt> = s.iter().map(|&p| style.map(p, sidef)).collect();
            mapped.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()
        })
        .collect();
    let mut out = vec![0u8; side * side];
    for r in 0..side {
        for c in 0..side {
            let p = (c as f64 + 0.5, r as f64 + 0.5);
            let d = segments
                .iter()
                .map(|&(a, b)| segment_distance(p, a, b))
                .fold(f64::INFINITY, f64::min);
            let mut v = (style.width + 0.5 - d).clamp(0.0, 1.0);
            if noise > 0.0 {
                v = (v + noise * rng.standard_normal()).clamp(0.0, 1.0);
            }
            out[r * side + c] = (v * 255.0).round() as u8;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DigitSpec {
    pub n_samples: usize,
    pub side: usize,
    /// Std of additive pixel noise on the `[0, 1]` scale.
    pub noise: f64,
    pub seed: u64,
}

impl DigitSpec {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            side: DIGIT_SIDE,
            noise: 0.05,
            seed,
        }
    }
}

/// Balanced synthetic digit set: sample `i` has label `i mod 10`.
/// Sample `i` draws from `Rng::stream(seed, i)`, so any prefix of a larger
/// set equals the smaller set with the same seed.
pub fn synthetic_digits(spec: &DigitSpec) -> Result<LabeledDataset> {
    if spec.side < 8 {
        return Err(Error::InvalidConfig(format!("digit side {} is too small", spec.side)));
    }
    let d = spec.side * spec.side;
    let rows: Vec<(usize, Vec<u8>)> = (0..spec.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::stream(spec.seed, i as u64);
            let class = i % CLASSES;
            let variants = skeletons(class);
            let strokes = &variants[rng.below(variants.len())];
            let style = Style::draw(&mut rng);
            (class, render(strokes, &style, spec.side, spec.noise, &mut rng))
        })
        .collect();
    let mut x = Vec::with_capacity(spec.n_samples * d);
    let mut y = Vec::with_capacity(spec.n_samples);
    for (class, pixels) in rows {
        y.push(class);
        x.extend(pixels.iter().map(|&p| p as f64 / 255.0));
    }
    let mut ds = LabeledDataset::new(Matrix::from_vec(spec.n_samples, d, x)?, y, CLASSES)?;
    ds.image_shape = Some((spec.side, spec.side));
    Ok(ds)
}
