use crate::error::{Error, Result};
use crate::tensor::{axpy, top_k_support, Matrix, Rng, SupportSet};

/// Tied-weight linear autoencoder: `z = Wᵀx + b`, `x̂ = W·z + b_out`.
///
/// `w` is `input_dim x hidden_dim`; its columns are the dictionary atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct KsaeModel {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub b_out: Vec<f64>,
}

impl KsaeModel {
    pub fn new(w: Matrix, b: Vec<f64>, b_out: Vec<f64>) -> Result<Self> {
        if b.len() != w.cols() {
            return Err(Error::dims("KsaeModel::new (hidden bias)", w.cols(), b.len()));
        }
        if b_out.len() != w.rows() {
            return Err(Error::dims("KsaeModel::new (output bias)", w.rows(), b_out.len()));
        }
        Ok(Self { w, b, b_out })
    }

    /// Gaussian weights with standard deviation `sigma`, zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, sigma: f64, rng: &mut Rng) -> Self {
        let w = Matrix::from_vec(input_dim, hidden_dim, rng.gaussian_vec(input_dim * hidden_dim, sigma))
            .expect("shape is consistent by construction");
        Self {
            w,
            b: vec![0.0; hidden_dim],
            b_out: vec![0.0; input_dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.b.iter().chain(&self.b_out).all(|v| v.is_finite())
    }

    /// Parameter tensors in a fixed order: `w`, `b`, `b_out`.
    pub fn params_mut(&mut self) -> [&mut [f64]; 3] {
        [self.w.as_mut_slice(), &mut self.b, &mut self.b_out]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        forward(self, x)
    }
}

/// Pre-sparsification hidden activities `Wᵀx + b`.
pub fn forward(model: &KsaeModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.input_dim() {
        return Err(Error::dims("forward", model.input_dim(), x.len()));
    }
    let mut z = model.b.clone();
    for (row, &xi) in model.w.row_iter().zip(x) {
        if xi != 0.0 {
            axpy(xi, row, &mut z);
        }
    }
    Ok(z)
}

/// Sparse hidden vector as `(index, value)` pairs with ascending indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCode {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseCode {
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidConfig(format!("duplicate code index {}", w[0].0)));
            }
        }
        if let Some(&(i, _)) = entries.last() {
            if i >= dim {
                return Err(Error::IndexOutOfRange { index: i, dim });
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    /// Values copied from a dense vector on the given support.
    pub fn from_dense_on(support: &SupportSet, dense: &[f64]) -> Self {
        Self {
            dim: support.dim(),
            entries: support.indices().iter().map(|&i| (i, dense[i])).collect(),
        }
    }

    pub fn from_support_values(support: &SupportSet, values: &[f64]) -> Self {
        assert_eq!(support.k(), values.len());
        Self {
            dim: support.dim(),
            entries: support.indices().iter().copied().zip(values.iter().copied()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// Number of stored entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stored entries whose value is not exactly zero.
    pub fn nnz(&self) -> usize {
        self.entries.iter().filter(|e| e.1 != 0.0).count()
    }

    pub fn support(&self) -> SupportSet {
        SupportSet::new(self.entries.iter().map(|e| e.0).collect(), self.dim)
            .expect("entries are validated on construction")
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }

    pub fn densify(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// Keeps the `k` largest activities of `z`.
pub fn sparsify(z: &[f64], k: usize) -> Result<SparseCode> {
    let support = top_k_support(z, k)?;
    Ok(SparseCode::from_dense_on(&support, z))
}

/// `x̂ = Σ v·W[:, i] + b_out` over the code's entries only.
pub fn reconstruct(model: &KsaeModel, code: &SparseCode) -> Result<Vec<f64>> {
    if code.dim() != model.hidden_dim() {
        return Err(Error::dims("reconstruct", model.hidden_dim(), code.dim()));
    }
    let mut out = model.b_out.clone();
    for (o, row) in out.iter_mut().zip(model.w.row_iter()) {
        *o += code.entries().iter().map(|&(i, v)| row[i] * v).sum::<f64>();
    }
    Ok(out)
}

/// Squared reconstruction error `‖x − x̂‖²`.
pub fn loss(x: &[f64], x_hat: &[f64]) -> f64 {
    assert_eq!(x.len(), x_hat.len(), "loss: length mismatch");
    x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Number of units kept at test time: `round(alpha·k)` clamped to
/// `[k, hidden_dim]`.
pub fn effective_k(k: usize, alpha: f64, hidden_dim: usize) -> Result<usize> {
    if k == 0 || k > hidden_dim {
        return Err(Error::SparsityOutOfRange { k, max: hidden_dim });
    }
    if !(alpha.is_finite() && alpha >= 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must be >= 1, got {alpha}")));
    }
    let scaled = (alpha * k as f64).round() as usize;
    Ok(scaled.max(k).min(hidden_dim))
}

/// Test-time features: the `αk` largest entries of `Wᵀx + b`.
pub fn encode_features(model: &KsaeModel, x: &[f64], k: usize, alpha: f64) -> Result<SparseCode> {
    let k_test = effective_k(k, alpha, model.hidden_dim())?;
    sparsify(&forward(model, x)?, k_test)
}

/// Encodes every row of `data`.
pub fn encode_batch(model: &KsaeModel, data: &Matrix, k: usize, alpha: f64) -> Result<Vec<SparseCode>> {
    data.row_iter().map(|x| encode_features(model, x, k, alpha)).collect()
}

/// Stacks codes as dense rows.
pub fn densify_codes(codes: &[SparseCode], dim: usize) -> Matrix {
    let mut m = Matrix::zeros(codes.len(), dim);
    for (r, code) in codes.iter().enumerate() {
        let row = m.row_mut(r);
        for &(i, v) in code.entries() {
            row[i] = v;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_model(input: usize, hidden: usize, seed: u64) -> KsaeModel {
        let mut rng = Rng::new(seed);
        let mut m = KsaeModel::init(input, hidden, 1.0, &mut rng);
        m.b = rng.gaussian_vec(hidden, 0.5);
        m.b_out = rng.gaussian_vec(input, 0.5);
        m
    }

    #[test]
    fn forward_identity_and_bias() {
        let m = KsaeModel::new(Matrix::identity(3), vec![0.0; 3], vec![0.0; 3]).unwrap();
        assert_eq!(forward(&m, &[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        let m = KsaeModel::new(Matrix::identity(3), vec![1.0; 3], vec![0.0; 3]).unwrap();
        assert_eq!(forward(&m, &[0.0; 3]).unwrap(), vec![1.0; 3]);
        assert!(forward(&m, &[0.0; 2]).is_err());
    }

    #[test]
    fn forward_matches_naive_dot_products() {
        let m = random_model(6, 9, 1);
        let x = Rng::new(2).gaussian_vec(6, 1.0);
        let z = forward(&m, &x).unwrap();
        for j in 0..9 {
            let naive: f64 = (0..6).map(|i| m.w[(i, j)] * x[i]).sum::<f64>() + m.b[j];
            assert!((naive - z[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn sparsify_keeps_largest_signed() {
        let code = sparsify(&[0.1, -2.0, 3.0, 0.5], 2).unwrap();
        assert_eq!(code.entries(), &[(2, 3.0), (3, 0.5)]);
        let all = sparsify(&[0.1, -2.0, 3.0], 3).unwrap();
        assert_eq!(all.len(), 3);
        assert!(sparsify(&[1.0], 2).is_err());
    }

    #[test]
    fn densify_adds_exactly_the_dropped_zeros() {
        let mut rng = Rng::new(3);
        for _ in 0..200 {
            let n = 2 + rng.below(30);
            let z = rng.gaussian_vec(n, 1.0);
            let k = 1 + rng.below(n);
            let code = sparsify(&z, k).unwrap();
            let dense = code.densify();
            assert_eq!(dense.iter().filter(|v| **v == 0.0).count(), n - k);
            // Re-sparsifying is idempotent when the kept values are positive;
            // a kept negative value loses to the zeros that replaced the rest.
            if code.values().iter().all(|&v| v > 0.0) {
                assert_eq!(sparsify(&dense, k).unwrap(), code);
            }
        }
    }

    #[test]
    fn reconstruct_cases() {
        let m = random_model(5, 7, 4);
        assert_eq!(reconstruct(&m, &SparseCode::empty(7)).unwrap(), m.b_out);

        let mut m0 = m.clone();
        m0.b_out = vec![0.0; 5];
        let unit = SparseCode::new(7, vec![(3, 1.0)]).unwrap();
        assert_eq!(reconstruct(&m0, &unit).unwrap(), m0.w.column(3));

        let code = sparsify(&forward(&m, &[1.0, 0.0, -1.0, 2.0, 0.5]).unwrap(), 3).unwrap();
        let dense = m.w.matvec(&code.densify()).unwrap();
        let sparse = reconstruct(&m, &code).unwrap();
        for i in 0..5 {
            assert!((dense[i] + m.b_out[i] - sparse[i]).abs() < 1e-12);
        }
        assert!(reconstruct(&m, &SparseCode::empty(6)).is_err());
    }

    #[test]
    fn loss_values() {
        assert_eq!(loss(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(loss(&[1.0, 0.0], &[0.0, 0.0]), 1.0);
    }

    #[test]
    fn alpha_encoding() {
        let m = random_model(10, 100, 5);
        let x = Rng::new(6).gaussian_vec(10, 1.0);
        let plain = sparsify(&forward(&m, &x).unwrap(), 25).unwrap();
        assert_eq!(encode_features(&m, &x, 25, 1.0).unwrap(), plain);
        let wide = encode_features(&m, &x, 25, 3.0).unwrap();
        assert_eq!(wide.len(), 75);
        assert!(plain.support().is_subset_of(&wide.support()));
        // clamped to hidden_dim
        assert_eq!(encode_features(&m, &x, 50, 3.0).unwrap().len(), 100);
        assert!(encode_features(&m, &x, 0, 1.0).is_err());
        assert!(encode_features(&m, &x, 25, 0.5).is_err());
    }

    #[test]
    fn effective_k_rounding() {
        assert_eq!(effective_k(6, 3.0, 256).unwrap(), 18);
        assert_eq!(effective_k(5, 1.5, 256).unwrap(), 8); // 7.5 rounds away from zero
        assert_eq!(effective_k(5, 1.0, 256).unwrap(), 5);
        assert_eq!(effective_k(5, 100.0, 256).unwrap(), 256);
    }
}
