use rayon::prelude::*;

use super::{Classifier, SupervisedConfig};
use crate::error::{Error, Result};
use crate::ksae::{sgd_momentum_step, OptimizerState};
use crate::tensor::{Matrix, Rng};

/// Multinomial logistic regression.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxHead {
    /// `feature_dim × class_count`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl SoftmaxHead {
    pub fn zeros(feature_dim: usize, class_count: usize) -> Self {
        Self {
            weights: Matrix::zeros(feature_dim, class_count),
            bias: vec![0.0; class_count],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn class_count(&self) -> usize {
        self.weights.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }

    pub(crate) fn params_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weights.as_mut_slice(), &mut self.bias]
    }

    /// `fᵀV + c` for a single feature vector; zero features are skipped.
    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (f, row) in features.iter().zip(self.weights.row_iter()) {
            if *f != 0.0 {
                crate::tensor::axpy(*f, row, &mut out);
            }
        }
        out
    }
}

/// Softmax with the maximum subtracted first.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `−ln p_label`, computed from logits via log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    (lse - logits[label]).max(0.0)
}

pub fn softmax_forward(head: &SoftmaxHead, features: &Matrix) -> Result<Matrix> {
    check_features(head, features)?;
    let rows: Vec<Vec<f64>> = features.row_iter().map(|f| softmax(&head.logits(f))).collect();
    Matrix::from_rows(&rows)
}

fn check_features(head: &SoftmaxHead, features: &Matrix) -> Result<()> {
    if features.cols() != head.feature_dim() {
        return Err(Error::dims("softmax head", head.feature_dim(), features.cols()));
    }
    Ok(())
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::CountMismatch {
            images: rows,
            labels: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::IndexOutOfRange { index: bad, dim: classes });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadGradients {
    pub d_weights: Matrix,
    pub d_bias: Vec<f64>,
    /// Mean cross-entropy.
    pub loss: f64,
}

/// Gradient of the mean cross-entropy over the rows of `features`.
pub fn head_gradients(head: &SoftmaxHead, features: &Matrix, labels: &[usize]) -> Result<HeadGradients> {
    check_features(head, features)?;
    check_labels(labels, features.rows(), head.class_count())?;
    let n = features.rows().max(1) as f64;
    let deltas: Vec<(Vec<f64>, f64)> = features
        .row_iter()
        .collect::<Vec<_>>()
        .par_iter()
        .zip(labels)
        .map(|(f, &y)| {
            let logits = head.logits(f);
            let loss = cross_entropy(&logits, y);
            let mut delta = softmax(&logits);
            delta[y] -= 1.0;
            (delta, loss)
        })
        .collect();
    let mut d_weights = Matrix::zeros(head.feature_dim(), head.class_count());
    let mut d_bias = vec![0.0; head.class_count()];
    let mut loss = 0.0;
    for (f, (delta, l)) in features.row_iter().zip(&deltas) {
        loss += l;
        crate::tensor::axpy(1.0 / n, delta, &mut d_bias);
        for (i, &fi) in f.iter().enumerate() {
            if fi != 0.0 {
                crate::tensor::axpy(fi / n, delta, d_weights.row_mut(i));
            }
        }
    }
    Ok(HeadGradients {
        d_weights,
        d_bias,
        loss: loss / n,
    })
}

/// Momentum-SGD on the mean cross-entropy of frozen features. Returns the
/// trained head and the mean training loss of every epoch.
pub fn train_head(
    head: SoftmaxHead,
    features: &Matrix,
    labels: &[usize],
    config: &SupervisedConfig,
) -> Result<(SoftmaxHead, Vec<f64>)> {
    config.validate()?;
    check_features(&head, features)?;
    check_labels(labels, features.rows(), head.class_count())?;
    let mut head = head;
    let mut rng = Rng::new(config.seed);
    let lengths: Vec<usize> = head.params_mut().iter().map(|p| p.len()).collect();
    let mut state = OptimizerState::new(&lengths);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        state.epoch = epoch;
        let order = rng.permutation(features.rows());
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = features.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let g = head_gradients(&head, &batch, &y)?;
            loss_sum += g.loss * chunk.len() as f64;
            sgd_momentum_step(
                &mut head.params_mut(),
                &[g.d_weights.as_slice(), &g.d_bias],
                &mut state,
                config.momentum.value_at(epoch),
                config.learning_rate.value_at(epoch),
                config.velocity_rule,
            )
            .map_err(|e| e.context(format!("head epoch {epoch}")))?;
        }
        let mean = loss_sum / features.rows().max(1) as f64;
        if !mean.is_finite() || !head.is_finite() {
            return Err(Error::NonFinite(format!("softmax training diverged in epoch {epoch}")));
        }
        history.push(mean);
    }
    Ok((head, history))
}

impl Classifier for SoftmaxHead {
    fn input_dim(&self) -> usize {
        self.feature_dim()
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.feature_dim() {
            return Err(Error::dims("softmax head", self.feature_dim(), x.len()));
        }
        Ok(self.logits(x))
    }
}
