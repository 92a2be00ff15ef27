//! How closely a trained autoencoder's one-shot encoder tracks full ITI.

use super::iti::{iti_recover, ItiOptions};
use super::synth::pseudo_inverse_values;
use crate::error::{Error, Result};
use crate::ksae::{forward, path_gradients, KsaeModel};
use crate::tensor::{top_k_support, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticReport {
    pub samples: usize,
    pub k: usize,
    /// Mean of `|Γ_enc ∩ Γ_iti| / k`.
    pub support_agreement: f64,
    /// Fraction of samples where the two supports are identical.
    pub exact_support_rate: f64,
    /// Mean absolute gap between encoder values and least-squares values of
    /// `x − b_out` on the encoder support.
    pub mean_value_discrepancy: f64,
    /// Fraction of samples for which ITI converged.
    pub iti_converged_rate: f64,
    /// Max `|decoder path − 2·(W_Γ z_Γ − x) z_Γᵀ|` over samples. The factor 2
    /// comes from differentiating the squared norm.
    pub decoder_identity_max_diff: f64,
    /// Max `|encoder path − x ⊗ ∂E/∂z_Γ|` over samples.
    pub encoder_identity_max_diff: f64,
}

impl DiagnosticReport {
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        vec![
            ("samples".into(), self.samples.to_string()),
            ("k".into(), self.k.to_string()),
            ("support_agreement".into(), format!("{:.6}", self.support_agreement)),
            ("exact_support_rate".into(), format!("{:.6}", self.exact_support_rate)),
            ("mean_value_discrepancy".into(), format!("{:.6e}", self.mean_value_discrepancy)),
            ("iti_converged_rate".into(), format!("{:.6}", self.iti_converged_rate)),
            ("decoder_identity_max_diff".into(), format!("{:.3e}", self.decoder_identity_max_diff)),
            ("encoder_identity_max_diff".into(), format!("{:.3e}", self.encoder_identity_max_diff)),
        ]
    }
}

pub fn ksae_vs_iti_diagnostic(model: &KsaeModel, x_batch: &Matrix, k: usize) -> Result<DiagnosticReport> {
    if x_batch.cols() != model.input_dim() {
        return Err(Error::dims("ksae_vs_iti_diagnostic", model.input_dim(), x_batch.cols()));
    }
    if k == 0 || k > model.hidden_dim() || k > model.input_dim() {
        return Err(Error::SparsityOutOfRange {
            k,
            max: model.hidden_dim().min(model.input_dim()),
        });
    }
    let n = x_batch.rows();
    let mut overlap = 0.0;
    let mut exact = 0usize;
    let mut value_gap = 0.0;
    let mut converged = 0usize;
    let mut dec_diff = 0.0_f64;
    let mut enc_diff = 0.0_f64;

    for x in x_batch.row_iter() {
        let z = forward(model, x)?;
        let enc_support = top_k_support(&z, k)?;
        let centred: Vec<f64> = x.iter().zip(&model.b_out).map(|(a, b)| a - b).collect();

        let iti = iti_recover(&model.w, &centred, k, ItiOptions::default())?;
        converged += iti.converged as usize;
        // A zero input yields an empty ITI code; compare against nothing.
        let iti_support = iti.code.support();
        let shared = enc_support.intersection_len(&iti_support);
        overlap += shared as f64 / k as f64;
        exact += (iti_support == enc_support) as usize;

        let reference = pseudo_inverse_values(&model.w, &centred, &enc_support)?;
        let gap: f64 = enc_support
            .indices()
            .iter()
            .zip(&reference)
            .map(|(&j, r)| (z[j] - r).abs())
            .sum::<f64>()
            / k as f64;
        value_gap += gap;

        let paths = path_gradients(model, x, &enc_support)?;
        let zs: Vec<f64> = enc_support.indices().iter().map(|&j| z[j]).collect();
        for i in 0..model.input_dim() {
            // W_Γ z_Γ + b_out − x, formed independently of the gradient code
            let xh: f64 = enc_support
                .indices()
                .iter()
                .zip(&zs)
                .map(|(&j, v)| model.w[(i, j)] * v)
                .sum::<f64>()
                + model.b_out[i];
            let r = xh - x[i];
            for (c, zc) in zs.iter().enumerate() {
                dec_diff = dec_diff.max((paths.decoder[(i, c)] - 2.0 * r * zc).abs());
                enc_diff = enc_diff.max((paths.encoder[(i, c)] - x[i] * paths.code_grad[c]).abs());
            }
        }
    }

    let denom = n.max(1) as f64;
    Ok(DiagnosticReport {
        samples: n,
        k,
        support_agreement: overlap / denom,
        exact_support_rate: exact as f64 / denom,
        mean_value_discrepancy: value_gap / denom,
        iti_converged_rate: converged as f64 / denom,
        decoder_identity_max_diff: dec_diff,
        encoder_identity_max_diff: enc_diff,
    })
}
