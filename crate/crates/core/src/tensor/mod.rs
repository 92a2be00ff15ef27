//! Dense linear-algebra kernels, top-k selection, least squares,
//! symmetric eigendecomposition and seeded randomness.

mod eig;
mod lstsq;
mod matrix;
mod rng;
mod support;

pub use eig::sym_eig;
pub use lstsq::{least_squares, LeastSquares, RANK_TOLERANCE, RIDGE};
pub use matrix::{axpy, dot, norm, Matrix};
pub use rng::{rng_gaussian, Rng};
pub use support::{restrict_columns, top_k_by_threshold, top_k_support, SupportSet};
