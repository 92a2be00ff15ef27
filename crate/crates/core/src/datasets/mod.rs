//! Labelled image data and the preprocessing pipeline: IDX loading, splits,
//! standardisation, patch extraction, contrast normalisation and ZCA
//! whitening.

mod digits;
mod idx;
mod preprocess;

pub use digits::{synthetic_digits, DigitSpec, DIGIT_SIDE};
pub use idx::{labels_to_bytes, load_idx, parse_labels, save_idx, IdxImages, IMAGES_MAGIC, LABELS_MAGIC};
pub use preprocess::{
    contrast_normalize, extract_patches, split, split_indices, standardize, zca_whiten, ContrastNorm, Patches,
    PreprocessStats, DEFAULT_ZCA_EPSILON, STD_FLOOR,
};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    /// One sample per row.
    pub x: Matrix,
    pub y: Vec<usize>,
    pub class_count: usize,
    /// `(rows, cols)` when samples are flattened images.
    pub image_shape: Option<(usize, usize)>,
}

impl LabeledDataset {
    pub fn new(x: Matrix, y: Vec<usize>, class_count: usize) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::CountMismatch {
                images: x.rows(),
                labels: y.len(),
            });
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= class_count) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                dim: class_count,
            });
        }
        Ok(Self {
            x,
            y,
            class_count,
            image_shape: None,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            class_count: self.class_count,
            image_shape: self.image_shape,
        }
    }

    /// First `n` samples.
    pub fn head(&self, n: usize) -> Self {
        self.select(&(0..n.min(self.len())).collect::<Vec<_>>())
    }

    /// Same labels, different features.
    pub fn with_features(&self, x: Matrix) -> Result<Self> {
        let mut out = Self::new(x, self.y.clone(), self.class_count)?;
        if out.x.cols() == self.x.cols() {
            out.image_shape = self.image_shape;
        }
        Ok(out)
    }
}
