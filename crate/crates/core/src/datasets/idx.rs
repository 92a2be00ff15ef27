//! IDX files: a big-endian magic number, big-endian `u32` dimensions, then
//! unsigned bytes.

use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::format::write_atomic;
use crate::tensor::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw image file contents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// `count × rows × cols` bytes.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        for d in [self.count(), self.rows, self.cols] {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn parse(bytes: &[u8], path: &Path) -> Result<Self> {
        let header = read_header(bytes, path, IMAGES_MAGIC, 3)?;
        let (count, rows, cols) = (header[0], header[1], header[2]);
        let body = &bytes[16..];
        let needed = count
            .checked_mul(rows)
            .and_then(|v| v.checked_mul(cols))
            .ok_or_else(|| Error::Format {
                path: path.to_owned(),
                reason: "image dimensions overflow".into(),
            })?;
        if body.len() < needed {
            return Err(Error::Truncated {
                path: path.to_owned(),
                needed: 16 + needed,
                available: bytes.len(),
            });
        }
        if body.len() > needed {
            return Err(Error::Format {
                path: path.to_owned(),
                reason: format!("{} trailing bytes", body.len() - needed),
            });
        }
        Ok(Self {
            rows,
            cols,
            pixels: body.to_vec(),
        })
    }

    /// Pixels scaled to `[0, 1]`, one flattened image per row.
    pub fn to_matrix(&self) -> Matrix {
        let data = self.pixels.iter().map(|&p| p as f64 / 255.0).collect();
        Matrix::from_vec(self.count(), self.rows * self.cols, data).expect("sized by construction")
    }

    /// Inverse of [`IdxImages::to_matrix`]: values are clamped to `[0, 1]`
    /// and rounded to the nearest byte.
    pub fn from_matrix(x: &Matrix, rows: usize, cols: usize) -> Result<Self> {
        if x.cols() != rows * cols {
            return Err(Error::dims("IdxImages::from_matrix", rows * cols, x.cols()));
        }
        let pixels = x
            .as_slice()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        Ok(Self { rows, cols, pixels })
    }
}

pub fn labels_to_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let count = read_header(bytes, path, LABELS_MAGIC, 1)?[0];
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Truncated {
            path: path.to_owned(),
            needed: 8 + count,
            available: bytes.len(),
        });
    }
    if body.len() > count {
        return Err(Error::Format {
            path: path.to_owned(),
            reason: format!("{} trailing bytes", body.len() - count),
        });
    }
    Ok(body.to_vec())
}

fn read_header(bytes: &[u8], path: &Path, magic: u32, ndims: usize) -> Result<Vec<usize>> {
    let header_len = 4 * (ndims + 1);
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.to_owned(),
            needed: header_len,
            available: bytes.len(),
        });
    }
    let be = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let found = be(0);
    if found != magic {
        return Err(Error::BadMagic {
            path: path.to_owned(),
            expected: magic,
            found,
        });
    }
    if bytes.len() < header_len {
        return Err(Error::Truncated {
            path: path.to_owned(),
            needed: header_len,
            available: bytes.len(),
        });
    }
    Ok((1..=ndims).map(|d| be(4 * d) as usize).collect())
}

/// Loads an image file and its label file. Class count is `max label + 1`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = IdxImages::parse(&std::fs::read(ip)?, ip)?;
    let labels = parse_labels(&std::fs::read(lp)?, lp)?;
    if images.count() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.count(),
            labels: labels.len(),
        });
    }
    let class_count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut ds = LabeledDataset::new(images.to_matrix(), labels.iter().map(|&l| l as usize).collect(), class_count)?;
    ds.image_shape = Some((images.rows, images.cols));
    Ok(ds)
}

/// Writes `data` as an image/label IDX pair. Pixel values must lie in
/// `[0, 1]`; they are rounded to bytes.
pub fn save_idx(data: &LabeledDataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let (rows, cols) = data.image_shape.unwrap_or((1, data.x.cols()));
    let images = IdxImages::from_matrix(&data.x, rows, cols)?;
    let labels: Vec<u8> = data
        .y
        .iter()
        .map(|&l| {
            u8::try_from(l).map_err(|_| Error::InvalidConfig(format!("label {l} does not fit in a byte")))
        })
        .collect::<Result<_>>()?;
    write_atomic(images_path.as_ref(), &images.to_bytes())?;
    write_atomic(labels_path.as_ref(), &labels_to_bytes(&labels))?;
    Ok(())
}
