use crate::error::{Error, Result};
use crate::ksae::SparseCode;
use crate::tensor::Matrix;

/// Tolerance on column norms for functions that require a normalised
/// dictionary.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// Scales every column to unit ℓ₂ norm.
pub fn normalize_columns(w: &Matrix) -> Result<Matrix> {
    let norms = w.column_norms();
    if let Some(j) = norms.iter().position(|&n| n < 1e-12) {
        return Err(Error::ZeroColumn(j));
    }
    let mut out = w.clone();
    let cols = w.cols();
    for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
        *v /= norms[i % cols];
    }
    Ok(out)
}

pub fn check_unit_norm(w: &Matrix) -> Result<()> {
    for (j, n) in w.column_norms().into_iter().enumerate() {
        if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::NotNormalized { column: j, norm: n });
        }
    }
    Ok(())
}

/// `max_{i≠j} |⟨w_i, w_j⟩|` for a dictionary with unit-norm columns; zero for
/// a single column.
pub fn mutual_coherence(w: &Matrix) -> Result<f64> {
    check_unit_norm(w)?;
    Ok(max_offdiagonal_abs(&w.gram()))
}

/// Largest absolute off-diagonal inner product, without a norm check.
pub fn max_offdiagonal_abs(gram: &Matrix) -> f64 {
    let n = gram.rows();
    let mut mu = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            mu = mu.max(gram[(i, j)].abs());
        }
    }
    mu
}

/// `H = WᵀW − I`.
pub fn gram_offdiagonal(w: &Matrix) -> Matrix {
    let mut h = w.gram();
    for i in 0..h.rows() {
        h[(i, i)] -= 1.0;
    }
    h
}

/// Whether `k ≤ 1 + 1/μ(W)`, the coherence bound under which the sparsest
/// solution of `x = Wz` is unique. An orthonormal dictionary (μ = 0)
/// satisfies it for every `k`.
pub fn donoho_uniqueness(w: &Matrix, k: usize) -> Result<bool> {
    let mu = mutual_coherence(w)?;
    Ok(mu == 0.0 || k as f64 <= 1.0 + 1.0 / mu)
}

/// Largest `k` allowed by [`donoho_uniqueness`]; `None` when unbounded.
pub fn donoho_max_k(mu: f64) -> Option<usize> {
    (mu > 0.0).then(|| (1.0 + 1.0 / mu + 1e-12).floor() as usize)
}

/// Why [`one_step_condition`] declined to evaluate the bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutOfScope {
    /// The code has no entries.
    EmptyCode,
    /// Some stored value is zero or negative; the bound assumes positive,
    /// sorted nonzeros.
    NonPositiveValue,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneStepCheck {
    pub holds: bool,
    /// `k·μ(W)`
    pub lhs: f64,
    /// `z_k / (2·z_1)` with `z_1` the largest and `z_k` the smallest value.
    pub rhs: f64,
    pub out_of_scope: Option<OutOfScope>,
}

/// One-step recovery condition: if `k·μ ≤ z_k/(2·z_1)` then
/// `supp_k(Wᵀ W z)` equals the support of `z`.
pub fn one_step_condition(w: &Matrix, z0: &SparseCode) -> Result<OneStepCheck> {
    let mu = mutual_coherence(w)?;
    Ok(one_step_condition_with_mu(mu, z0))
}

/// [`one_step_condition`] with a precomputed coherence.
pub fn one_step_condition_with_mu(mu: f64, z0: &SparseCode) -> OneStepCheck {
    let values = z0.values();
    let k = values.len();
    let lhs = k as f64 * mu;
    if k == 0 {
        return OneStepCheck {
            holds: false,
            lhs,
            rhs: f64::NAN,
            out_of_scope: Some(OutOfScope::EmptyCode),
        };
    }
    let largest = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let smallest = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let rhs = smallest / (2.0 * largest);
    if smallest <= 0.0 {
        return OneStepCheck {
            holds: false,
            lhs,
            rhs,
            out_of_scope: Some(OutOfScope::NonPositiveValue),
        };
    }
    OneStepCheck {
        holds: lhs <= rhs,
        lhs,
        rhs,
        out_of_scope: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn normalize_simple_columns() {
        let w = Matrix::from_columns(&[[3.0, 4.0]]).unwrap();
        let n = normalize_columns(&w).unwrap();
        assert!((n[(0, 0)] - 0.6).abs() < 1e-15 && (n[(1, 0)] - 0.8).abs() < 1e-15);
        let i = Matrix::identity(4);
        assert_eq!(normalize_columns(&i).unwrap(), i);
        let z = Matrix::from_columns(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(normalize_columns(&z), Err(Error::ZeroColumn(1))));
    }

    #[test]
    fn normalized_norms_are_one() {
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let r = 1 + rng.below(10);
            let c = 1 + rng.below(10);
            let w = Matrix::from_vec(r, c, rng.gaussian_vec(r * c, 3.0)).unwrap();
            let n = normalize_columns(&w).unwrap();
            assert!(n.column_norms().iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn coherence_cases() {
        assert_eq!(mutual_coherence(&Matrix::identity(5)).unwrap(), 0.0);
        let dup = Matrix::from_columns(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        assert_eq!(mutual_coherence(&dup).unwrap(), 1.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let w = Matrix::from_columns(&[[1.0, 0.0], [s, s]]).unwrap();
        assert!((mutual_coherence(&w).unwrap() - s).abs() < 1e-15);
        assert_eq!(mutual_coherence(&Matrix::from_columns(&[[0.6, 0.8]]).unwrap()).unwrap(), 0.0);
        let unnormalized = Matrix::from_columns(&[[2.0, 0.0]]).unwrap();
        assert!(matches!(mutual_coherence(&unnormalized), Err(Error::NotNormalized { column: 0, .. })));
    }

    #[test]
    fn coherence_is_permutation_and_sign_invariant() {
        let mut rng = Rng::new(4);
        let w = normalize_columns(&Matrix::from_vec(6, 9, rng.gaussian_vec(54, 1.0)).unwrap()).unwrap();
        let mu = mutual_coherence(&w).unwrap();
        let perm = rng.permutation(9);
        let mut shuffled = Matrix::zeros(6, 9);
        for (dst, &src) in perm.iter().enumerate() {
            let mut col = w.column(src);
            if dst % 2 == 0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
            shuffled.set_column(dst, &col);
        }
        assert!((mutual_coherence(&shuffled).unwrap() - mu).abs() < 1e-15);
    }

    #[test]
    fn gram_offdiagonal_properties() {
        let mut rng = Rng::new(5);
        let w = normalize_columns(&Matrix::from_vec(5, 8, rng.gaussian_vec(40, 1.0)).unwrap()).unwrap();
        let h = gram_offdiagonal(&w);
        assert_eq!(h, h.transpose());
        assert!((h.max_abs() - mutual_coherence(&w).unwrap()).abs() < 1e-12);
        assert!(gram_offdiagonal(&Matrix::identity(3)).max_abs() == 0.0);
    }

    #[test]
    fn donoho_bound() {
        assert_eq!(donoho_max_k(0.1), Some(11));
        assert_eq!(donoho_max_k(0.5), Some(3));
        assert_eq!(donoho_max_k(1.0), Some(2));
        assert_eq!(donoho_max_k(0.0), None);
        assert!(donoho_uniqueness(&Matrix::identity(6), 6).unwrap());
        let dup = Matrix::from_columns(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(donoho_uniqueness(&dup, 2).unwrap());
        assert!(!donoho_uniqueness(&dup, 3).unwrap());
    }

    #[test]
    fn one_step_condition_cases() {
        let z = SparseCode::new(4, vec![(0, 1.0), (2, 0.4)]).unwrap();
        let c = one_step_condition(&Matrix::identity(4), &z).unwrap();
        assert!(c.holds);
        assert_eq!(c.lhs, 0.0);
        assert!((c.rhs - 0.2).abs() < 1e-15);

        let dup = Matrix::from_columns(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        let z = SparseCode::new(2, vec![(0, 1.0), (1, 1.0)]).unwrap();
        let c = one_step_condition(&dup, &z).unwrap();
        assert!(!c.holds);
        assert_eq!(c.lhs, 2.0);
        assert_eq!(c.rhs, 0.5);

        let neg = SparseCode::new(4, vec![(0, 1.0), (1, -0.5)]).unwrap();
        let c = one_step_condition(&Matrix::identity(4), &neg).unwrap();
        assert!(!c.holds);
        assert_eq!(c.out_of_scope, Some(OutOfScope::NonPositiveValue));
        let c = one_step_condition(&Matrix::identity(4), &SparseCode::empty(4)).unwrap();
        assert_eq!(c.out_of_scope, Some(OutOfScope::EmptyCode));
    }
}
