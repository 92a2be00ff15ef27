//! Binary containers and atomic file output.
//!
//! All containers share one little-endian layout:
//!
//! ```text
//! magic    4 bytes   "KSAE" | "KPRE" | "KCOD"
//! version  u32
//! payload  u64 dimensions / f64 values, container specific
//! crc32    u32       over every preceding byte
//! ```
//!
//! * `KSAE` (model): `input_dim, hidden_dim`, then `W` row-major, `b`, `b_out`.
//! * `KPRE` (preprocessing): `dim, has_zca (0|1)`, `zca_epsilon`, `mean`,
//!   `std`, then the `dim × dim` ZCA transform row-major when present.
//! * `KCOD` (sparse codes): `samples, dim`, then per sample `nnz` followed by
//!   `nnz` pairs of `(u64 index, f64 value)`.

use std::io::Write;
use std::path::Path;

use crate::datasets::PreprocessStats;
use crate::error::{Error, Result};
use crate::ksae::{KsaeModel, SparseCode};
use crate::tensor::Matrix;

pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_MAGIC: &[u8; 4] = b"KSAE";
pub const STATS_MAGIC: &[u8; 4] = b"KPRE";
pub const CODES_MAGIC: &[u8; 4] = b"KCOD";

/// Writes `bytes` to a temporary file next to `path`, syncs it, and renames it
/// over `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn new(magic: &[u8; 4]) -> Self {
        let mut buf = magic.to_vec();
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Self { buf }
    }

    fn u64(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        self.buf.reserve(8 * vs.len());
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Decoder<'a> {
    fn new(bytes: &'a [u8], magic: &[u8; 4], path: &'a Path) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Truncated {
                path: path.to_owned(),
                needed: 12,
                available: bytes.len(),
            });
        }
        if &bytes[..4] != magic {
            return Err(Error::BadMagic {
                path: path.to_owned(),
                expected: u32::from_be_bytes(*magic),
                found: u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")),
            });
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(Error::Format {
                path: path.to_owned(),
                reason: format!("checksum mismatch (stored {stored:08x}, computed {actual:08x})"),
            });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Format {
                path: path.to_owned(),
                reason: format!("unsupported version {version}"),
            });
        }
        Ok(Self {
            bytes: body,
            pos: 8,
            path,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                path: self.path.to_owned(),
                needed: self.pos.saturating_add(n) + 4,
                available: self.bytes.len() + 4,
            }),
        }
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| self.bad(format!("dimension {v} too large")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| self.bad("length overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.bad(format!("{} unexpected trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }

    fn bad(&self, reason: String) -> Error {
        Error::Format {
            path: self.path.to_owned(),
            reason,
        }
    }
}

pub fn model_to_bytes(model: &KsaeModel) -> Vec<u8> {
    let mut e = Encoder::new(MODEL_MAGIC);
    e.u64(model.input_dim());
    e.u64(model.hidden_dim());
    e.f64s(model.w.as_slice());
    e.f64s(&model.b);
    e.f64s(&model.b_out);
    e.finish()
}

pub fn model_from_bytes(bytes: &[u8], path: &Path) -> Result<KsaeModel> {
    let mut d = Decoder::new(bytes, MODEL_MAGIC, path)?;
    let (n, h) = (d.u64()?, d.u64()?);
    let size = n.checked_mul(h).ok_or_else(|| d.bad("dimensions overflow".into()))?;
    let w = d.f64s(size)?;
    let b = d.f64s(h)?;
    let b_out = d.f64s(n)?;
    d.finish()?;
    KsaeModel::new(Matrix::from_vec(n, h, w)?, b, b_out)
}

pub fn save_model(model: &KsaeModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &model_to_bytes(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<KsaeModel> {
    let path = path.as_ref();
    model_from_bytes(&std::fs::read(path)?, path)
}

pub fn stats_to_bytes(stats: &PreprocessStats) -> Vec<u8> {
    let mut e = Encoder::new(STATS_MAGIC);
    e.u64(stats.dim());
    e.u64(stats.zca_transform.is_some() as usize);
    e.f64s(&[stats.zca_epsilon]);
    e.f64s(&stats.mean);
    e.f64s(&stats.std);
    if let Some(t) = &stats.zca_transform {
        e.f64s(t.as_slice());
    }
    e.finish()
}

pub fn stats_from_bytes(bytes: &[u8], path: &Path) -> Result<PreprocessStats> {
    let mut d = Decoder::new(bytes, STATS_MAGIC, path)?;
    let dim = d.u64()?;
    let has_zca = match d.u64()? {
        0 => false,
        1 => true,
        v => return Err(d.bad(format!("bad ZCA flag {v}"))),
    };
    let zca_epsilon = d.f64s(1)?[0];
    let mean = d.f64s(dim)?;
    let std = d.f64s(dim)?;
    let zca_transform = if has_zca {
        let size = dim.checked_mul(dim).ok_or_else(|| d.bad("dimensions overflow".into()))?;
        Some(Matrix::from_vec(dim, dim, d.f64s(size)?)?)
    } else {
        None
    };
    d.finish()?;
    Ok(PreprocessStats {
        mean,
        std,
        zca_transform,
        zca_epsilon,
    })
}

pub fn save_stats(stats: &PreprocessStats, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &stats_to_bytes(stats))
}

pub fn load_stats(path: impl AsRef<Path>) -> Result<PreprocessStats> {
    let path = path.as_ref();
    stats_from_bytes(&std::fs::read(path)?, path)
}

pub fn codes_to_bytes(codes: &[SparseCode], dim: usize) -> Vec<u8> {
    let mut e = Encoder::new(CODES_MAGIC);
    e.u64(codes.len());
    e.u64(dim);
    for c in codes {
        e.u64(c.len());
        for &(i, v) in c.entries() {
            e.u64(i);
            e.f64s(&[v]);
        }
    }
    e.finish()
}

pub fn codes_from_bytes(bytes: &[u8], path: &Path) -> Result<(Vec<SparseCode>, usize)> {
    let mut d = Decoder::new(bytes, CODES_MAGIC, path)?;
    let (n, dim) = (d.u64()?, d.u64()?);
    let mut codes = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let nnz = d.u64()?;
        let mut entries = Vec::with_capacity(nnz.min(dim));
        for _ in 0..nnz {
            let i = d.u64()?;
            entries.push((i, d.f64s(1)?[0]));
        }
        codes.push(SparseCode::new(dim, entries)?);
    }
    d.finish()?;
    Ok((codes, dim))
}

/// Sparse code CSV with header `sample,index,value`, values printed with
/// round-trip precision.
pub fn codes_to_csv(codes: &[SparseCode]) -> String {
    let mut out = String::from("sample,index,value\n");
    for (s, c) in codes.iter().enumerate() {
        for &(i, v) in c.entries() {
            out.push_str(&format!("{s},{i},{v:?}\n"));
        }
    }
    out
}
