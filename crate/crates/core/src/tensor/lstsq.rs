use super::{dot, Matrix};
use crate::error::{Error, Result};

/// Relative pivot magnitude below which the system counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Ridge added to the normal equations when the system is rank deficient.
pub const RIDGE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquares {
    pub solution: Vec<f64>,
    /// `true` when the ridge fallback was used.
    pub regularized: bool,
}

/// Householder QR of a tall matrix, stored compactly.
struct Qr {
    /// Upper triangle holds R; the reflectors live in `vs`.
    r: Matrix,
    vs: Vec<Vec<f64>>,
}

impl Qr {
    fn factor(a: &Matrix) -> Qr {
        let (m, n) = a.shape();
        let mut r = a.clone();
        let mut vs = Vec::with_capacity(n);
        for j in 0..n {
            let mut v: Vec<f64> = (j..m).map(|i| r[(i, j)]).collect();
            let alpha = super::norm(&v);
            if alpha == 0.0 {
                vs.push(Vec::new());
                continue;
            }
            let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign * alpha;
            let vnorm_sq = dot(&v, &v);
            for c in j..n {
                let proj: f64 = (j..m).map(|i| v[i - j] * r[(i, c)]).sum::<f64>() * 2.0 / vnorm_sq;
                for i in j..m {
                    r[(i, c)] -= proj * v[i - j];
                }
            }
            vs.push(v);
        }
        Qr { r, vs }
    }

    /// Qᵀ y
    fn apply_qt(&self, y: &[f64]) -> Vec<f64> {
        let mut y = y.to_vec();
        for (j, v) in self.vs.iter().enumerate() {
            if v.is_empty() {
                continue;
            }
            let vnorm_sq = dot(v, v);
            let proj = dot(v, &y[j..]) * 2.0 / vnorm_sq;
            for (yi, vi) in y[j..].iter_mut().zip(v) {
                *yi -= proj * vi;
            }
        }
        y
    }

    fn diag_abs(&self) -> Vec<f64> {
        (0..self.r.cols()).map(|j| self.r[(j, j)].abs()).collect()
    }

    fn back_substitute(&self, qty: &[f64]) -> Vec<f64> {
        let n = self.r.cols();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|c| self.r[(i, c)] * x[c]).sum();
            x[i] = (qty[i] - s) / self.r[(i, i)];
        }
        x
    }
}

/// Minimises `‖y − a·z‖₂` by Householder QR.
///
/// If some pivot of R falls below `RANK_TOLERANCE` times the largest one, the
/// ridge system `(aᵀa + RIDGE·I) z = aᵀy` is solved instead (via QR of the
/// stacked matrix `[a; √RIDGE·I]`) and the result is flagged.
pub fn least_squares(a: &Matrix, y: &[f64]) -> Result<LeastSquares> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::Underdetermined { rows: m, cols: n });
    }
    if y.len() != m {
        return Err(Error::dims("least_squares", m, y.len()));
    }
    if n == 0 {
        return Ok(LeastSquares {
            solution: Vec::new(),
            regularized: false,
        });
    }
    let qr = Qr::factor(a);
    let diag = qr.diag_abs();
    let largest = diag.iter().cloned().fold(0.0, f64::max);
    let deficient = largest == 0.0 || diag.iter().any(|&d| d < RANK_TOLERANCE * largest);
    if !deficient {
        let qty = qr.apply_qt(y);
        return Ok(LeastSquares {
            solution: qr.back_substitute(&qty),
            regularized: false,
        });
    }

    let mut stacked = Matrix::zeros(m + n, n);
    stacked.as_mut_slice()[..m * n].copy_from_slice(a.as_slice());
    let s = RIDGE.sqrt();
    for j in 0..n {
        stacked[(m + j, j)] = s;
    }
    let mut y_ext = y.to_vec();
    y_ext.resize(m + n, 0.0);
    let qr = Qr::factor(&stacked);
    let qty = qr.apply_qt(&y_ext);
    Ok(LeastSquares {
        solution: qr.back_substitute(&qty),
        regularized: true,
    })
}
