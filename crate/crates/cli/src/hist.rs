//! Histogram of hidden activities after sparsification.
//!
//! The first row is the zero mass (`bin_low = bin_high = 0`): every
//! activity that is exactly zero, whether outside the support or a genuine
//! zero inside it. The remaining `bins` rows split `[min, max]` of the
//! nonzero activities into equal-width bins, the last one closed on the
//! right. With no nonzero activity only the zero row is written.

use ksae_core::ksae::SparseCode;

#[derive(Clone, Debug, PartialEq)]
pub struct HistBin {
    pub low: f64,
    pub high: f64,
    pub count: u64,
}

pub fn activation_histogram(codes: &[SparseCode], hidden_dim: usize, bins: usize) -> Vec<HistBin> {
    let nonzero: Vec<f64> = codes
        .iter()
        .flat_map(|c| c.entries().iter().map(|&(_, v)| v))
        .filter(|&v| v != 0.0)
        .collect();
    let total = (codes.len() * hidden_dim) as u64;
    let mut out = vec![HistBin {
        low: 0.0,
        high: 0.0,
        count: total - nonzero.len() as u64,
    }];
    if nonzero.is_empty() || bins == 0 {
        return out;
    }
    let lo = nonzero.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = nonzero.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for v in nonzero {
        let i = if width > 0.0 {
            (((v - lo) / width).floor() as usize).min(bins - 1)
        } else {
            0
        };
        counts[i] += 1;
    }
    out.extend(counts.into_iter().enumerate().map(|(i, count)| HistBin {
        low: lo + width * i as f64,
        high: if i + 1 == bins { hi } else { lo + width * (i + 1) as f64 },
        count,
    }));
    out
}

pub fn hist_csv(bins: &[HistBin]) -> String {
    let mut s = String::from("bin_low,bin_high,count\n");
    for b in bins {
        s.push_str(&format!("{:?},{:?},{}\n", b.low, b.high, b.count));
    }
    s
}
