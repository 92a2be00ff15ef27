//! Support sets and top-k selection.
//!
//! Selection is by *signed* value: the `k` largest entries win, not the `k`
//! largest magnitudes. Ties are broken in favour of the lowest index. Two
//! independent implementations are provided (sorting and threshold
//! bisection); they must always agree.

use std::cmp::Ordering;

use super::Matrix;
use crate::error::{Error, Result};

/// Sorted, duplicate-free set of indices into a vector of length `dim`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SupportSet {
    indices: Vec<usize>,
    dim: usize,
}

impl SupportSet {
    /// Builds a support from arbitrary indices (sorted and checked here).
    pub fn new(mut indices: Vec<usize>, dim: usize) -> Result<Self> {
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidConfig(format!("duplicate support index {}", w[0])));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(Error::IndexOutOfRange { index: last, dim });
            }
        }
        Ok(Self { indices, dim })
    }

    pub fn full(dim: usize) -> Self {
        Self {
            indices: (0..dim).collect(),
            dim,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn is_subset_of(&self, other: &SupportSet) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }

    pub fn intersection_len(&self, other: &SupportSet) -> usize {
        self.indices.iter().filter(|&&i| other.contains(i)).count()
    }

    /// Scatters `values` (one per index) into a dense vector of length `dim`.
    pub fn pad(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.indices.len(), "one value per support index");
        let mut out = vec![0.0; self.dim];
        for (&i, &v) in self.indices.iter().zip(values) {
            out[i] = v;
        }
        out
    }

    /// Gathers the entries of `v` on this support.
    pub fn gather(&self, v: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| v[i]).collect()
    }
}

fn check_k(v: &[f64], k: usize) -> Result<()> {
    if k == 0 || k > v.len() {
        return Err(Error::SparsityOutOfRange { k, max: v.len() });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("top-k input".into()));
    }
    Ok(())
}

/// Descending by value, ascending by index on ties. Inputs are finite, and
/// `-0.0 == 0.0` counts as a tie just as it does for a threshold test.
fn rank_order(v: &[f64], a: usize, b: usize) -> Ordering {
    v[b].partial_cmp(&v[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
}

/// Indices of the `k` largest entries of `v` (signed), sorted ascending.
pub fn top_k_support(v: &[f64], k: usize) -> Result<SupportSet> {
    check_k(v, k)?;
    let mut idx: Vec<usize> = (0..v.len()).collect();
    if k < v.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank_order(v, a, b));
        idx.truncate(k);
    }
    idx.sort_unstable();
    Ok(SupportSet {
        indices: idx,
        dim: v.len(),
    })
}

/// Same selection as [`top_k_support`], found by bisecting a threshold
/// until exactly `k` entries survive.
///
/// When the bisection interval collapses onto a value shared by several
/// entries, the entries strictly above it are taken and the remainder is
/// filled from the tied level in index order.
pub fn top_k_by_threshold(v: &[f64], k: usize) -> Result<SupportSet> {
    check_k(v, k)?;
    let dim = v.len();
    let count_at_least = |t: f64| v.iter().filter(|&&x| x >= t).count();
    let (mut lo, mut hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));

    let collect = |t: f64| -> Vec<usize> { (0..dim).filter(|&i| v[i] >= t).collect() };

    // Invariant: count(>= lo) >= k and count(>= hi) < k, unless the top
    // level itself already holds k entries.
    if count_at_least(hi) >= k {
        let indices = (0..dim).filter(|&i| v[i] == hi).take(k).collect();
        return Ok(SupportSet { indices, dim });
    }
    loop {
        let mid = lo + (hi - lo) / 2.0;
        if mid <= lo || mid >= hi {
            break;
        }
        match count_at_least(mid).cmp(&k) {
            Ordering::Equal => {
                return Ok(SupportSet {
                    indices: collect(mid),
                    dim,
                })
            }
            Ordering::Greater => lo = mid,
            Ordering::Less => hi = mid,
        }
    }
    // lo and hi are adjacent doubles; every entry in [lo, hi) equals lo.
    let mut indices = collect(hi);
    let missing = k - indices.len();
    indices.extend((0..dim).filter(|&i| v[i] == lo).take(missing));
    indices.sort_unstable();
    Ok(SupportSet { indices, dim })
}

/// Columns of `m` listed in `s`, in ascending index order.
pub fn restrict_columns(m: &Matrix, s: &SupportSet) -> Result<Matrix> {
    if let Some(&bad) = s.indices().iter().find(|&&i| i >= m.cols()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            dim: m.cols(),
        });
    }
    let k = s.k();
    let mut data = Vec::with_capacity(m.rows() * k);
    for row in m.row_iter() {
        data.extend(s.indices().iter().map(|&j| row[j]));
    }
    Matrix::from_vec(m.rows(), k, data)
}
