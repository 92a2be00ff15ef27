//! Support-restricted backpropagation for the tied-weight k-sparse
//! autoencoder.
//!
//! For one sample with support Γ, `z_Γ = W_Γᵀx + b_Γ`, `x̂ = W_Γ z_Γ + b_out`
//! and `E = ‖x̂ − x‖²`. With `r = x̂ − x` and `g = 2 W_Γᵀ r`:
//!
//! * decoder path: `∂E/∂W_Γ ∋ 2 r z_Γᵀ`
//! * encoder path: `∂E/∂W_Γ ∋ x gᵀ`, `∂E/∂b_Γ = g`
//! * `∂E/∂b_out = 2 r`
//!
//! Both weight paths land in the same columns because the weights are tied.
//! Batch gradients are means over samples.

use rayon::prelude::*;

use super::model::{forward, KsaeModel};
use crate::error::{Error, Result};
use crate::tensor::{dot, top_k_support, Matrix, SupportSet};

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub dw: Matrix,
    pub db: Vec<f64>,
    pub db_out: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &KsaeModel) -> Self {
        Self {
            dw: Matrix::zeros(model.input_dim(), model.hidden_dim()),
            db: vec![0.0; model.hidden_dim()],
            db_out: vec![0.0; model.input_dim()],
        }
    }

    /// Gradient tensors in the same order as [`KsaeModel::params_mut`].
    pub fn slices(&self) -> [&[f64]; 3] {
        [self.dw.as_slice(), &self.db, &self.db_out]
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug)]
pub struct BatchGradients {
    pub grads: Gradients,
    /// Mean per-sample squared error.
    pub loss: f64,
    /// Support used for each sample, in batch order.
    pub supports: Vec<SupportSet>,
}

/// Per-sample contributions, reduced later in sample order.
struct SampleTerms {
    support: SupportSet,
    /// `input_dim x k`, row-major: combined decoder+encoder column gradients.
    dw_cols: Vec<f64>,
    db: Vec<f64>,
    residual: Vec<f64>,
    loss: f64,
}

/// Decoder-path and encoder-path gradients of one sample's squared error
/// with respect to the support columns `W_Γ` (each `input_dim x k`), plus
/// the residual `x̂ − x`.
#[derive(Clone, Debug)]
pub struct PathGradients {
    pub decoder: Matrix,
    pub encoder: Matrix,
    pub code_grad: Vec<f64>,
    pub residual: Vec<f64>,
}

pub fn path_gradients(model: &KsaeModel, x: &[f64], support: &SupportSet) -> Result<PathGradients> {
    let z = forward(model, x)?;
    let terms = sample_terms_split(model, x, &z, support);
    Ok(terms)
}

fn sample_terms_split(model: &KsaeModel, x: &[f64], z: &[f64], support: &SupportSet) -> PathGradients {
    let idx = support.indices();
    let k = idx.len();
    let n = model.input_dim();
    let zs: Vec<f64> = idx.iter().map(|&j| z[j]).collect();
    let mut residual = Vec::with_capacity(n);
    for ((row, &bo), &xi) in model.w.row_iter().zip(&model.b_out).zip(x) {
        let xh: f64 = idx.iter().zip(&zs).map(|(&j, &v)| row[j] * v).sum::<f64>() + bo;
        residual.push(xh - xi);
    }
    let mut code_grad = vec![0.0; k];
    for (row, &r) in model.w.row_iter().zip(&residual) {
        for (g, &j) in code_grad.iter_mut().zip(idx) {
            *g += 2.0 * row[j] * r;
        }
    }
    let mut decoder = Matrix::zeros(n, k);
    let mut encoder = Matrix::zeros(n, k);
    for i in 0..n {
        for c in 0..k {
            decoder[(i, c)] = 2.0 * residual[i] * zs[c];
            encoder[(i, c)] = x[i] * code_grad[c];
        }
    }
    PathGradients {
        decoder,
        encoder,
        code_grad,
        residual,
    }
}

fn sample_terms(model: &KsaeModel, x: &[f64], support: SupportSet) -> Result<SampleTerms> {
    let z = forward(model, x)?;
    let idx = support.indices();
    let k = idx.len();
    let zs: Vec<f64> = idx.iter().map(|&j| z[j]).collect();
    let mut residual = Vec::with_capacity(x.len());
    for ((row, &bo), &xi) in model.w.row_iter().zip(&model.b_out).zip(x) {
        let xh: f64 = idx.iter().zip(&zs).map(|(&j, &v)| row[j] * v).sum::<f64>() + bo;
        residual.push(xh - xi);
    }
    let loss = dot(&residual, &residual);
    let mut g = vec![0.0; k];
    for (row, &r) in model.w.row_iter().zip(&residual) {
        if r == 0.0 {
            continue;
        }
        for (gc, &j) in g.iter_mut().zip(idx) {
            *gc += row[j] * r;
        }
    }
    g.iter_mut().for_each(|v| *v *= 2.0);
    let mut dw_cols = Vec::with_capacity(x.len() * k);
    for (&r, &xi) in residual.iter().zip(x) {
        dw_cols.extend(zs.iter().zip(&g).map(|(&zc, &gc)| 2.0 * r * zc + xi * gc));
    }
    Ok(SampleTerms {
        support,
        dw_cols,
        db: g,
        residual,
        loss,
    })
}

/// Gradients of the mean squared reconstruction error with each sample's
/// support fixed to `supports[i]`.
pub fn backward_on_supports(model: &KsaeModel, x_batch: &Matrix, supports: &[SupportSet]) -> Result<BatchGradients> {
    let n = x_batch.rows();
    if n == 0 {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    if x_batch.cols() != model.input_dim() {
        return Err(Error::dims("backward", model.input_dim(), x_batch.cols()));
    }
    if supports.len() != n {
        return Err(Error::dims("backward (supports)", n, supports.len()));
    }
    if let Some(s) = supports.iter().find(|s| s.dim() != model.hidden_dim()) {
        return Err(Error::dims("backward (support dim)", model.hidden_dim(), s.dim()));
    }
    let terms: Vec<SampleTerms> = (0..n)
        .into_par_iter()
        .map(|i| sample_terms(model, x_batch.row(i), supports[i].clone()))
        .collect::<Result<_>>()?;
    Ok(reduce(model, terms))
}

/// Gradients with supports chosen as the top-`k` activities of each sample.
pub fn backward(model: &KsaeModel, x_batch: &Matrix, k: usize) -> Result<BatchGradients> {
    let n = x_batch.rows();
    if n == 0 {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    if x_batch.cols() != model.input_dim() {
        return Err(Error::dims("backward", model.input_dim(), x_batch.cols()));
    }
    let terms: Vec<SampleTerms> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = x_batch.row(i);
            let support = top_k_support(&forward(model, x)?, k)?;
            assert!(support.k() <= k, "sparsity invariant violated");
            sample_terms(model, x, support)
        })
        .collect::<Result<_>>()?;
    Ok(reduce(model, terms))
}

fn reduce(model: &KsaeModel, terms: Vec<SampleTerms>) -> BatchGradients {
    let n = terms.len() as f64;
    let mut grads = Gradients::zeros_like(model);
    let mut loss = 0.0;
    let mut supports = Vec::with_capacity(terms.len());
    let h = model.hidden_dim();
    for t in terms {
        let idx = t.support.indices();
        let k = idx.len();
        let dw = grads.dw.as_mut_slice();
        for i in 0..model.input_dim() {
            let src = &t.dw_cols[i * k..(i + 1) * k];
            let dst = &mut dw[i * h..(i + 1) * h];
            for (&j, &v) in idx.iter().zip(src) {
                dst[j] += v;
            }
        }
        for (&j, &v) in idx.iter().zip(&t.db) {
            grads.db[j] += v;
        }
        for (d, &r) in grads.db_out.iter_mut().zip(&t.residual) {
            *d += 2.0 * r;
        }
        loss += t.loss;
        supports.push(t.support);
    }
    grads.dw.scale(1.0 / n);
    grads.db.iter_mut().for_each(|v| *v /= n);
    grads.db_out.iter_mut().for_each(|v| *v /= n);
    BatchGradients {
        grads,
        loss: loss / n,
        supports,
    }
}

/// Mean squared reconstruction error with supports held fixed.
pub fn batch_loss_on_supports(model: &KsaeModel, x_batch: &Matrix, supports: &[SupportSet]) -> Result<f64> {
    let mut total = 0.0;
    for (x, s) in x_batch.row_iter().zip(supports) {
        let z = forward(model, x)?;
        let code = super::model::SparseCode::from_dense_on(s, &z);
        let xh = super::model::reconstruct(model, &code)?;
        total += super::model::loss(x, &xh);
    }
    Ok(total / x_batch.rows() as f64)
}
