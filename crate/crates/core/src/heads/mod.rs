//! Supervised evaluation on top of k-sparse features: softmax regression on
//! frozen codes, shallow and deep fine-tuning, and error-rate reports.

mod network;
mod softmax;

pub use network::{
    finetune_deep, finetune_layers, finetune_shallow, pretrain_stack, stack_features, stack_gradients,
    DeepFinetuneConfig, DeepStack, StackGradients, StackLayer, StageReport,
};
pub use softmax::{cross_entropy, head_gradients, softmax, softmax_forward, train_head, HeadGradients, SoftmaxHead};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::ksae::{LinearSchedule, VelocityRule};

/// Anything that maps an input vector to one score per class.
pub trait Classifier {
    fn input_dim(&self) -> usize;
    fn scores(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Arg-max class; ties go to the lowest index.
    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of misclassified samples.
pub fn evaluate<C: Classifier + Sync>(model: &C, data: &LabeledDataset) -> Result<f64> {
    use rayon::prelude::*;
    if data.input_dim() != model.input_dim() {
        return Err(Error::dims("evaluate", model.input_dim(), data.input_dim()));
    }
    if data.is_empty() {
        return Ok(0.0);
    }
    let rows: Vec<&[f64]> = data.x.row_iter().collect();
    let wrong: usize = rows
        .par_iter()
        .zip(&data.y)
        .map(|(x, &y)| model.predict(x).map(|p| (p != y) as usize))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(wrong as f64 / data.len() as f64)
}

/// Momentum-SGD settings for supervised training. The defaults start at
/// `m = 0.25`, `η = 1` and decay `η` linearly to `0.001` over the run.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: LinearSchedule,
    pub momentum: LinearSchedule,
    pub velocity_rule: VelocityRule,
    pub seed: u64,
}

impl SupervisedConfig {
    pub fn new(epochs: usize) -> Self {
        Self {
            epochs,
            batch_size: 100,
            learning_rate: LinearSchedule::linear(1.0, 0.001, epochs),
            momentum: LinearSchedule::constant(0.25),
            velocity_rule: VelocityRule::Updated,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.momentum.values().any(|m| !(0.0..1.0).contains(&m)) {
            return Err(Error::InvalidConfig("momentum must stay in [0, 1)".into()));
        }
        if self.learning_rate.values().any(|v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::InvalidConfig("learning rate must stay positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub run_id: String,
    pub dataset: String,
    pub n_train: usize,
    pub hidden: usize,
    pub k: usize,
    pub alpha: f64,
    pub stage: String,
    pub error_rate: f64,
}

pub const EVAL_CSV_HEADER: &str = "run_id,dataset,n_train,hidden,k,alpha,stage,error_rate";

pub fn eval_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from(EVAL_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.6}\n",
            r.run_id, r.dataset, r.n_train, r.hidden, r.k, r.alpha, r.stage, r.error_rate
        ));
    }
    out
}
