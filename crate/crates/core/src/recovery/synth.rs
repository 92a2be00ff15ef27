//! Planted sparse-coding problems with a known dictionary and known codes.

use super::normalize_columns;
use crate::error::{Error, Result};
use crate::ksae::SparseCode;
use crate::tensor::{least_squares, Matrix, Rng, SupportSet};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_samples: usize,
    pub k: usize,
    pub noise_std: f64,
    pub value_range: (f64, f64),
}

impl SynthSpec {
    /// Noiseless problem with values in `[0.5, 1.5]`.
    pub fn new(input_dim: usize, hidden_dim: usize, n_samples: usize, k: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            n_samples,
            k,
            noise_std: 0.0,
            value_range: (0.5, 1.5),
        }
    }

    pub fn noise(mut self, std: f64) -> Self {
        self.noise_std = std;
        self
    }

    pub fn values(mut self, lo: f64, hi: f64) -> Self {
        self.value_range = (lo, hi);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthProblem {
    /// Dictionary, `input_dim × hidden_dim`, unit-norm columns.
    pub w0: Matrix,
    /// One true code per sample.
    pub codes: Vec<SparseCode>,
    /// Samples as rows: `x_i = W0 z_i + noise`.
    pub x: Matrix,
}

impl SynthProblem {
    pub fn k(&self) -> usize {
        self.codes.first().map_or(0, SparseCode::len)
    }
}

pub fn make_synth_problem(rng: &mut Rng, spec: &SynthSpec) -> Result<SynthProblem> {
    let dict = normalize_columns(&Matrix::from_vec(
        spec.input_dim,
        spec.hidden_dim,
        rng.gaussian_vec(spec.input_dim * spec.hidden_dim, 1.0),
    )?)?;
    synth_with_dictionary(rng, dict, spec)
}

/// Planted problem on a caller-supplied dictionary (columns are normalised).
pub fn synth_with_dictionary(rng: &mut Rng, w: Matrix, spec: &SynthSpec) -> Result<SynthProblem> {
    let SynthSpec {
        input_dim,
        hidden_dim,
        n_samples,
        k,
        noise_std,
        value_range: (lo, hi),
    } = *spec;
    if k == 0 || k > input_dim || input_dim > hidden_dim {
        return Err(Error::InvalidConfig(format!(
            "need 0 < k <= input_dim <= hidden_dim, got k={k}, input_dim={input_dim}, hidden_dim={hidden_dim}"
        )));
    }
    if w.shape() != (input_dim, hidden_dim) {
        return Err(Error::dims("synth_with_dictionary", format!("{input_dim}x{hidden_dim}"), format!("{}x{}", w.rows(), w.cols())));
    }
    if !(lo <= hi && lo.is_finite() && hi.is_finite()) || lo == 0.0 && hi == 0.0 {
        return Err(Error::InvalidConfig(format!("bad value range [{lo}, {hi}]")));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidConfig(format!("bad noise std {noise_std}")));
    }
    let w0 = normalize_columns(&w)?;

    let mut codes = Vec::with_capacity(n_samples);
    let mut x = Matrix::zeros(n_samples, input_dim);
    for i in 0..n_samples {
        let support = rng.subset(hidden_dim, k);
        let entries: Vec<(usize, f64)> = support
            .into_iter()
            .map(|j| {
                // Redraw exact zeros so every code keeps k nonzeros.
                let mut v = rng.uniform_range(lo, hi);
                while v == 0.0 {
                    v = rng.uniform_range(lo, hi);
                }
                (j, v)
            })
            .collect();
        let code = SparseCode::new(hidden_dim, entries)?;
        assert_eq!(code.nnz(), k);
        let row = x.row_mut(i);
        for &(j, v) in code.entries() {
            for (r, xr) in row.iter_mut().enumerate() {
                *xr += w0[(r, j)] * v;
            }
        }
        if noise_std > 0.0 {
            for xr in row.iter_mut() {
                *xr += noise_std * rng.standard_normal();
            }
        }
        codes.push(code);
    }
    Ok(SynthProblem { w0, codes, x })
}

/// Random `n × n` orthonormal matrix (QR of a Gaussian matrix, via
/// Gram–Schmidt with reorthogonalisation).
pub fn random_orthonormal(n: usize, rng: &mut Rng) -> Matrix {
    loop {
        let g = Matrix::from_vec(n, n, rng.gaussian_vec(n * n, 1.0)).expect("square");
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut ok = true;
        for j in 0..n {
            let mut v = g.column(j);
            for _ in 0..2 {
                for u in &q {
                    let c = crate::tensor::dot(u, &v);
                    crate::tensor::axpy(-c, u, &mut v);
                }
            }
            let nv = crate::tensor::norm(&v);
            if nv < 1e-8 {
                ok = false;
                break;
            }
            v.iter_mut().for_each(|e| *e /= nv);
            q.push(v);
        }
        if ok {
            return Matrix::from_columns(&q).expect("square");
        }
    }
}

/// Exact least-squares values of `x` on `support`, used as a reference for
/// the autoencoder's encoder values.
pub fn pseudo_inverse_values(w: &Matrix, x: &[f64], support: &SupportSet) -> Result<Vec<f64>> {
    let ws = crate::tensor::restrict_columns(w, support)?;
    Ok(least_squares(&ws, x)?.solution)
}
