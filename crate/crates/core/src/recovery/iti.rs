//! Iterative thresholding with inversion.
//!
//! Starting from `z = 0`, alternate
//!
//! 1. support estimation: `Γ = supp_k(z + Wᵀ(x − W z))`
//! 2. inversion: `z_Γ = W_Γ⁺ x`, `z_Γᶜ = 0`
//!
//! until the support repeats, the relative residual drops below `tol`, or
//! `max_iters` inversions have been done.

use crate::error::{Error, Result};
use crate::ksae::SparseCode;
use crate::tensor::{least_squares, norm, restrict_columns, top_k_support, Matrix, SupportSet};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ItiOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for ItiOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItiResult {
    pub code: SparseCode,
    /// Number of inversion steps performed.
    pub iterations: usize,
    /// `‖x − W·code‖₂`
    pub residual_norm: f64,
    pub converged: bool,
    /// Residual norm after every inversion step.
    pub residual_history: Vec<f64>,
    /// Whether any inversion fell back to the ridge solve.
    pub regularized: bool,
    /// Whether a residual increase was seen on a step that did not need
    /// the ridge fallback.
    pub residual_increased: bool,
}

fn residual(w: &Matrix, x: &[f64], dense: &[f64]) -> Result<Vec<f64>> {
    let fit = w.matvec(dense)?;
    Ok(x.iter().zip(&fit).map(|(a, b)| a - b).collect())
}

/// Support estimation step: `supp_k(z + Wᵀ(x − W z))`.
pub fn iti_support_step(w: &Matrix, x: &[f64], z: &SparseCode, k: usize) -> Result<SupportSet> {
    if x.len() != w.rows() {
        return Err(Error::dims("iti_support_step", w.rows(), x.len()));
    }
    if z.dim() != w.cols() {
        return Err(Error::dims("iti_support_step (code)", w.cols(), z.dim()));
    }
    let dense = z.densify();
    let r = residual(w, x, &dense)?;
    let mut proxy = w.t_matvec(&r)?;
    for (p, d) in proxy.iter_mut().zip(&dense) {
        *p += d;
    }
    top_k_support(&proxy, k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inversion {
    pub code: SparseCode,
    pub regularized: bool,
}

/// Inversion step: least-squares values on `support`, zero elsewhere.
pub fn iti_inversion_step(w: &Matrix, x: &[f64], support: &SupportSet) -> Result<Inversion> {
    if support.k() > w.rows() {
        return Err(Error::Underdetermined {
            rows: w.rows(),
            cols: support.k(),
        });
    }
    let restricted = restrict_columns(w, support)?;
    let sol = least_squares(&restricted, x)?;
    Ok(Inversion {
        code: SparseCode::from_support_values(support, &sol.solution),
        regularized: sol.regularized,
    })
}

pub fn iti_recover(w: &Matrix, x: &[f64], k: usize, opts: ItiOptions) -> Result<ItiResult> {
    iti_run(w, x, k, opts, |_| {})
}

/// ITI that also reports `‖H zⁿ − H z₀‖₂` after every inversion, where
/// `H = WᵀW − I` and `z₀` is the true code. Purely diagnostic.
pub fn iti_noise_trace(w: &Matrix, x: &[f64], k: usize, z0: &SparseCode, opts: ItiOptions) -> Result<(ItiResult, Vec<f64>)> {
    let h = super::gram_offdiagonal(w);
    let hz0 = h.matvec(&z0.densify())?;
    let mut trace = Vec::new();
    let result = iti_run(w, x, k, opts, |code| {
        let hz = h.matvec(&code.densify()).expect("dimensions checked by ITI");
        let diff: Vec<f64> = hz.iter().zip(&hz0).map(|(a, b)| a - b).collect();
        trace.push(norm(&diff));
    })?;
    Ok((result, trace))
}

fn iti_run(w: &Matrix, x: &[f64], k: usize, opts: ItiOptions, mut on_iterate: impl FnMut(&SparseCode)) -> Result<ItiResult> {
    if k > w.rows() {
        return Err(Error::Underdetermined { rows: w.rows(), cols: k });
    }
    if x.len() != w.rows() {
        return Err(Error::dims("iti_recover", w.rows(), x.len()));
    }
    let x_norm = norm(x);
    if x_norm == 0.0 {
        return Ok(ItiResult {
            code: SparseCode::empty(w.cols()),
            iterations: 0,
            residual_norm: 0.0,
            converged: true,
            residual_history: Vec::new(),
            regularized: false,
            residual_increased: false,
        });
    }

    let mut code = SparseCode::empty(w.cols());
    let mut last_support: Option<SupportSet> = None;
    let mut history = Vec::new();
    let mut regularized = false;
    let mut increased = false;
    let mut converged = false;
    let mut residual_norm = x_norm;

    for _ in 0..opts.max_iters {
        let support = iti_support_step(w, x, &code, k)?;
        if last_support.as_ref() == Some(&support) {
            converged = true;
            break;
        }
        let inv = iti_inversion_step(w, x, &support)?;
        code = inv.code;
        regularized |= inv.regularized;
        let r = norm(&residual(w, x, &code.densify())?);
        if let Some(&prev) = history.last() {
            if r > prev * (1.0 + 1e-12) + 1e-15 {
                if inv.regularized {
                    log::info!("ITI residual rose from {prev:e} to {r:e} on a ridge-regularised step");
                } else {
                    increased = true;
                    log::warn!("ITI residual rose from {prev:e} to {r:e}");
                }
            }
        }
        history.push(r);
        on_iterate(&code);
        residual_norm = r;
        last_support = Some(support);
        if r / x_norm < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(ItiResult {
        code,
        iterations: history.len(),
        residual_norm,
        converged,
        residual_history: history,
        regularized,
        residual_increased: increased,
    })
}
