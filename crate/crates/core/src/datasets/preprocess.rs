use rayon::prelude::*;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::{sym_eig, Matrix, Rng};

/// Floor applied to per-dimension standard deviations.
pub const STD_FLOOR: f64 = 1e-8;
pub const DEFAULT_ZCA_EPSILON: f64 = 0.01;

/// Everything needed to replay a fitted transform on new data:
/// `((x − mean) / std) · zca_transform`.
#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub zca_transform: Option<Matrix>,
    pub zca_epsilon: f64,
}

impl PreprocessStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.dim() {
            return Err(Error::dims("PreprocessStats::apply", self.dim(), x.cols()));
        }
        let mut out = x.clone();
        for row in out.as_mut_slice().chunks_mut(self.dim().max(1)) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        match &self.zca_transform {
            Some(t) => out.matmul(t),
            None => Ok(out),
        }
    }
}

/// Indices of a seeded shuffle, split into the first `n_train` and the rest.
pub fn split_indices(n: usize, n_train: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidConfig(format!("n_train = {n_train} must be in 1..{n}")));
    }
    let mut perm = Rng::new(seed).permutation(n);
    let rest = perm.split_off(n_train);
    Ok((perm, rest))
}

pub fn split(data: &LabeledDataset, n_train: usize, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let (a, b) = split_indices(data.len(), n_train, seed)?;
    Ok((data.select(&a), data.select(&b)))
}

/// Per-dimension `(x − mean) / max(std, 1e-8)` with the population standard
/// deviation.
pub fn standardize(x: &Matrix) -> Result<(Matrix, PreprocessStats)> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::InvalidConfig(format!("standardize needs at least 2 samples, got {n}")));
    }
    let d = x.cols();
    let mut mean = vec![0.0; d];
    for row in x.row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in x.row_iter() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.iter().map(|s| (s / n as f64).sqrt().max(STD_FLOOR)).collect();
    let stats = PreprocessStats {
        mean,
        std,
        zca_transform: None,
        zca_epsilon: 0.0,
    };
    Ok((stats.apply(x)?, stats))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Patches {
    /// One flattened (row-major) patch per row.
    pub data: Matrix,
    /// `(image index, top row, left column)` of every patch.
    pub origins: Vec<(usize, usize, usize)>,
}

/// Draws `n_patches` square patches, each from a uniformly random image and
/// top-left corner.
pub fn extract_patches(
    images: &Matrix,
    image_shape: (usize, usize),
    patch_size: usize,
    n_patches: usize,
    rng: &mut Rng,
) -> Result<Patches> {
    let (h, w) = image_shape;
    if h * w != images.cols() {
        return Err(Error::dims("extract_patches", format!("{h}x{w} = {} pixels", h * w), images.cols()));
    }
    if patch_size == 0 || patch_size > h || patch_size > w || images.rows() == 0 {
        return Err(Error::InvalidConfig(format!(
            "cannot cut {patch_size}x{patch_size} patches from {} images of {h}x{w}",
            images.rows()
        )));
    }
    let mut data = Matrix::zeros(n_patches, patch_size * patch_size);
    let mut origins = Vec::with_capacity(n_patches);
    for p in 0..n_patches {
        let img = rng.below(images.rows());
        let top = rng.below(h - patch_size + 1);
        let left = rng.below(w - patch_size + 1);
        let src = images.row(img);
        let dst = data.row_mut(p);
        for r in 0..patch_size {
            let start = (top + r) * w + left;
            dst[r * patch_size..(r + 1) * patch_size].copy_from_slice(&src[start..start + patch_size]);
        }
        origins.push((img, top, left));
    }
    Ok(Patches { data, origins })
}

/// Local contrast normalisation parameters. Patches are multiplied by
/// `input_scale` (mapping `[0, 1]` pixels to `[0, 255]`), centred, and divided
/// by `sqrt(variance + regularizer)`. The result is left on that normalised
/// scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContrastNorm {
    pub input_scale: f64,
    pub regularizer: f64,
}

impl Default for ContrastNorm {
    fn default() -> Self {
        Self {
            input_scale: 255.0,
            regularizer: 10.0,
        }
    }
}

pub fn contrast_normalize(patches: &Matrix, params: ContrastNorm) -> Result<Matrix> {
    if patches.rows() == 0 || patches.cols() == 0 {
        return Err(Error::InvalidConfig("contrast_normalize needs a nonempty patch matrix".into()));
    }
    let d = patches.cols();
    let mut out = patches.clone();
    out.as_mut_slice().par_chunks_mut(d).for_each(|row| {
        row.iter_mut().for_each(|v| *v *= params.input_scale);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let denom = (var + params.regularizer).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) / denom);
    });
    Ok(out)
}

/// ZCA whitening: with `C = V Λ Vᵀ` the sample covariance (divisor `n − 1`)
/// of the centred patches, the transform is `V diag(1/√(λ + ε)) Vᵀ`.
pub fn zca_whiten(patches: &Matrix, epsilon: f64) -> Result<(Matrix, PreprocessStats)> {
    let (n, d) = patches.shape();
    if n < 2 {
        return Err(Error::InvalidConfig(format!("zca_whiten needs at least 2 samples, got {n}")));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidConfig(format!("zca epsilon must be non-negative, got {epsilon}")));
    }
    if n <= d {
        log::warn!("ZCA on {n} samples of dimension {d}: covariance is rank deficient");
    }
    let mut mean = vec![0.0; d];
    for row in patches.row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut centred = patches.clone();
    for row in centred.as_mut_slice().chunks_mut(d) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = centred.gram();
    cov.scale(1.0 / (n - 1) as f64);
    // exact symmetry for the eigensolver's check
    for i in 0..d {
        for j in (i + 1)..d {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }
    let (lambda, v) = sym_eig(&cov)?;
    let mut transform = Matrix::zeros(d, d);
    for (c, &l) in lambda.iter().enumerate() {
        let f = 1.0 / (l.max(0.0) + epsilon).sqrt();
        if !f.is_finite() {
            return Err(Error::NonFinite(format!(
                "zca_whiten: eigenvalue {l:e} with epsilon {epsilon:e}"
            )));
        }
        for i in 0..d {
            let vi = v[(i, c)] * f;
            if vi == 0.0 {
                continue;
            }
            for j in 0..d {
                transform[(i, j)] += vi * v[(j, c)];
            }
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let s = 0.5 * (transform[(i, j)] + transform[(j, i)]);
            transform[(i, j)] = s;
            transform[(j, i)] = s;
        }
    }
    let stats = PreprocessStats {
        mean,
        std: vec![1.0; d],
        zca_transform: Some(transform),
        zca_epsilon: epsilon,
    };
    Ok((stats.apply(patches)?, stats))
}
