//! Discriminative networks built from pretrained k-sparse layers.
//!
//! Every layer computes `z = Wᵀa + b` and keeps its `αk` largest entries
//! (the same encoder used for frozen features); the softmax head reads the
//! last layer's densified code. Backpropagation reaches a layer's weights
//! only through the units in that sample's support. Decoder biases `b_out`
//! play no part here and are never modified.

use rayon::prelude::*;

use super::softmax::{cross_entropy, softmax, train_head, SoftmaxHead};
use super::{Classifier, SupervisedConfig};
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::ksae::{
    densify_codes, effective_k, encode_batch, encode_features, sgd_momentum_step, train, EpochRecord, KsaeModel,
    OptimizerState, SparseCode, TrainConfig,
};
use crate::tensor::{axpy, Matrix, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct StackLayer {
    pub model: KsaeModel,
    pub k: usize,
    pub alpha: f64,
}

impl StackLayer {
    pub fn encode(&self, a: &[f64]) -> Result<SparseCode> {
        encode_features(&self.model, a, self.k, self.alpha)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeepStack {
    pub layers: Vec<StackLayer>,
    pub head: SoftmaxHead,
}

impl DeepStack {
    pub fn new(layers: Vec<StackLayer>, head: SoftmaxHead) -> Result<Self> {
        check_chain(&layers)?;
        let last = layers.last().map_or(0, |l| l.model.hidden_dim());
        if head.feature_dim() != last {
            return Err(Error::dims("DeepStack head", last, head.feature_dim()));
        }
        for l in &layers {
            effective_k(l.k, l.alpha, l.model.hidden_dim())?;
        }
        Ok(Self { layers, head })
    }

    /// Densified code of the last layer for every row of `x`.
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        stack_features(&self.layers, x)
    }

    fn forward_sample(&self, x: &[f64]) -> Result<Trace> {
        let mut acts = vec![x.to_vec()];
        let mut codes = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let code = layer.encode(acts.last().expect("nonempty"))?;
            acts.push(code.densify());
            codes.push(code);
        }
        let logits = self.head.logits(acts.last().expect("nonempty"));
        Ok(Trace { acts, codes, logits })
    }
}

fn check_chain(layers: &[StackLayer]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::InvalidConfig("a stack needs at least one layer".into()));
    }
    for w in layers.windows(2) {
        if w[1].model.input_dim() != w[0].model.hidden_dim() {
            return Err(Error::dims(
                "stack layer chain",
                w[0].model.hidden_dim(),
                w[1].model.input_dim(),
            ));
        }
    }
    Ok(())
}

/// Densified `αk` codes of the top layer.
pub fn stack_features(layers: &[StackLayer], x: &Matrix) -> Result<Matrix> {
    let mut a = x.clone();
    for layer in layers {
        let codes = encode_batch(&layer.model, &a, layer.k, layer.alpha)?;
        a = densify_codes(&codes, layer.model.hidden_dim());
    }
    Ok(a)
}

struct Trace {
    /// Input followed by every layer's densified output.
    acts: Vec<Vec<f64>>,
    codes: Vec<SparseCode>,
    logits: Vec<f64>,
}

/// One sample's gradient pieces: for every trainable layer the input
/// activation and the code gradient on the support.
struct SampleGrad {
    delta: Vec<f64>,
    top: Vec<f64>,
    /// `(layer, input activation, [(unit, dE/dz_unit)])`
    layers: Vec<(usize, Vec<f64>, Vec<(usize, f64)>)>,
    loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StackGradients {
    pub head_weights: Matrix,
    pub head_bias: Vec<f64>,
    /// `(dW, db)` for layers `trainable_from..`, in layer order.
    pub layers: Vec<(Matrix, Vec<f64>)>,
    pub loss: f64,
}

/// Mean cross-entropy gradients for the head and for layers with index
/// `>= trainable_from` (pass `layers.len()` to train the head only).
pub fn stack_gradients(
    stack: &DeepStack,
    x: &Matrix,
    labels: &[usize],
    trainable_from: usize,
) -> Result<StackGradients> {
    let depth = stack.layers.len();
    if trainable_from > depth {
        return Err(Error::InvalidConfig(format!("trainable_from {trainable_from} > depth {depth}")));
    }
    if x.cols() != stack.layers[0].model.input_dim() {
        return Err(Error::dims("stack input", stack.layers[0].model.input_dim(), x.cols()));
    }
    if labels.len() != x.rows() {
        return Err(Error::CountMismatch {
            images: x.rows(),
            labels: labels.len(),
        });
    }
    let rows: Vec<&[f64]> = x.row_iter().collect();
    let samples: Vec<SampleGrad> = rows
        .par_iter()
        .zip(labels)
        .map(|(xi, &y)| sample_grad(stack, xi, y, trainable_from))
        .collect::<Result<_>>()?;

    let n = x.rows().max(1) as f64;
    let mut head_weights = Matrix::zeros(stack.head.feature_dim(), stack.head.class_count());
    let mut head_bias = vec![0.0; stack.head.class_count()];
    let mut layers: Vec<(Matrix, Vec<f64>)> = stack.layers[trainable_from..]
        .iter()
        .map(|l| {
            (
                Matrix::zeros(l.model.input_dim(), l.model.hidden_dim()),
                vec![0.0; l.model.hidden_dim()],
            )
        })
        .collect();
    let mut loss = 0.0;
    for s in &samples {
        loss += s.loss;
        axpy(1.0 / n, &s.delta, &mut head_bias);
        for (i, &a) in s.top.iter().enumerate() {
            if a != 0.0 {
                axpy(a / n, &s.delta, head_weights.row_mut(i));
            }
        }
        for (l, input, dz) in &s.layers {
            let (dw, db) = &mut layers[l - trainable_from];
            for &(j, g) in dz {
                db[j] += g / n;
            }
            for (i, &a) in input.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let row = dw.row_mut(i);
                for &(j, g) in dz {
                    row[j] += a * g / n;
                }
            }
        }
    }
    Ok(StackGradients {
        head_weights,
        head_bias,
        layers,
        loss: loss / n,
    })
}

fn sample_grad(stack: &DeepStack, x: &[f64], y: usize, trainable_from: usize) -> Result<SampleGrad> {
    if y >= stack.head.class_count() {
        return Err(Error::IndexOutOfRange {
            index: y,
            dim: stack.head.class_count(),
        });
    }
    let mut trace = stack.forward_sample(x)?;
    let loss = cross_entropy(&trace.logits, y);
    let mut delta = softmax(&trace.logits);
    delta[y] -= 1.0;
    // dE/da for the top activation
    let mut grad_a: Vec<f64> = stack.head.weights.row_iter().map(|row| crate::tensor::dot(row, &delta)).collect();
    let mut layers = Vec::new();
    for l in (trainable_from..stack.layers.len()).rev() {
        let code = &trace.codes[l];
        let dz: Vec<(usize, f64)> = code.entries().iter().map(|&(j, _)| (j, grad_a[j])).collect();
        if l > trainable_from {
            let w = &stack.layers[l].model.w;
            grad_a = w.row_iter().map(|row| dz.iter().map(|&(j, g)| row[j] * g).sum()).collect();
        }
        layers.push((l, std::mem::take(&mut trace.acts[l]), dz));
    }
    layers.reverse();
    let top = trace.acts.pop().expect("nonempty");
    Ok(SampleGrad {
        delta,
        top,
        layers,
        loss,
    })
}

/// Trains the head and layers `trainable_from..` jointly; earlier layers are
/// left untouched. Returns the per-epoch mean training loss.
pub fn finetune_layers(
    stack: &mut DeepStack,
    data: &LabeledDataset,
    trainable_from: usize,
    config: &SupervisedConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let lengths: Vec<usize> = {
        let mut v = vec![stack.head.weights.as_slice().len(), stack.head.bias.len()];
        for l in &stack.layers[trainable_from.min(stack.layers.len())..] {
            v.push(l.model.w.as_slice().len());
            v.push(l.model.b.len());
        }
        v
    };
    let mut state = OptimizerState::new(&lengths);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        state.epoch = epoch;
        let order = rng.permutation(data.len());
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let x = data.x.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| data.y[i]).collect();
            let g = stack_gradients(stack, &x, &y, trainable_from)
                .map_err(|e| e.context(format!("fine-tune epoch {epoch}, batch {b}")))?;
            loss_sum += g.loss * chunk.len() as f64;
            let mut grads: Vec<&[f64]> = vec![g.head_weights.as_slice(), &g.head_bias];
            for (dw, db) in &g.layers {
                grads.push(dw.as_slice());
                grads.push(db);
            }
            let DeepStack { layers, head } = stack;
            let [hw, hb] = head.params_mut();
            let mut params: Vec<&mut [f64]> = vec![hw, hb];
            for l in layers[trainable_from..].iter_mut() {
                let m = &mut l.model;
                params.push(m.w.as_mut_slice());
                params.push(&mut m.b);
            }
            sgd_momentum_step(
                &mut params,
                &grads,
                &mut state,
                config.momentum.value_at(epoch),
                config.learning_rate.value_at(epoch),
                config.velocity_rule,
            )
            .map_err(|e| e.context(format!("fine-tune epoch {epoch}, batch {b}")))?;
        }
        let mean = loss_sum / data.len().max(1) as f64;
        if !mean.is_finite() || !stack.head.is_finite() || stack.layers.iter().any(|l| !l.model.is_finite()) {
            return Err(Error::NonFinite(format!("fine-tuning diverged in epoch {epoch}")));
        }
        history.push(mean);
    }
    Ok(history)
}

/// Joint supervised training of one k-sparse layer and its head.
pub fn finetune_shallow(
    model: KsaeModel,
    head: SoftmaxHead,
    data: &LabeledDataset,
    k: usize,
    alpha: f64,
    config: &SupervisedConfig,
) -> Result<(DeepStack, Vec<f64>)> {
    let mut stack = DeepStack::new(vec![StackLayer { model, k, alpha }], head)?;
    let history = finetune_layers(&mut stack, data, 0, config)?;
    Ok((stack, history))
}

/// Greedy layer-wise pretraining: layer `i` trains on the densified `αk`
/// codes of layer `i − 1`.
pub fn pretrain_stack(
    x: &Matrix,
    configs: &[TrainConfig],
    init: impl Fn(usize, &TrainConfig) -> KsaeModel,
) -> Result<(Vec<StackLayer>, Vec<Vec<EpochRecord>>)> {
    if configs.is_empty() {
        return Err(Error::InvalidConfig("pretrain_stack needs at least one layer config".into()));
    }
    let mut input = x.clone();
    let mut layers = Vec::with_capacity(configs.len());
    let mut histories = Vec::with_capacity(configs.len());
    for (i, cfg) in configs.iter().enumerate() {
        if let Some(prev) = layers.last() {
            let prev: &StackLayer = prev;
            assert_eq!(input.cols(), prev.model.hidden_dim(), "layer {i} input dim");
        }
        let model = init(input.cols(), cfg);
        let out = train(model, &input, cfg).map_err(|e| e.context(format!("pretraining layer {i}")))?;
        let layer = StackLayer {
            model: out.model,
            k: cfg.k,
            alpha: cfg.alpha,
        };
        if i + 1 < configs.len() {
            input = stack_features(std::slice::from_ref(&layer), &input)?;
        }
        layers.push(layer);
        histories.push(out.history);
    }
    Ok((layers, histories))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeepFinetuneConfig {
    pub base: SupervisedConfig,
    /// Epochs of the three stages; `None` splits `base.epochs` into thirds
    /// (remainder to the last stage).
    pub stage_epochs: Option<[usize; 3]>,
    /// Settings for the head-only first stage, epochs included. Useful
    /// because a fresh head tolerates a much larger step than pretrained
    /// layers do.
    pub head: Option<SupervisedConfig>,
}

impl DeepFinetuneConfig {
    pub fn new(base: SupervisedConfig) -> Self {
        Self {
            base,
            stage_epochs: None,
            head: None,
        }
    }

    pub fn stage_epochs(&self) -> [usize; 3] {
        let mut e = self.stage_epochs.unwrap_or_else(|| {
            let t = self.base.epochs / 3;
            [t, t, self.base.epochs - 2 * t]
        });
        if let Some(h) = &self.head {
            e[0] = h.epochs;
        }
        e
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: usize,
    pub description: &'static str,
    /// First trainable layer; equal to the depth when only the head trains.
    pub trainable_from: usize,
    pub epochs: usize,
    pub loss_history: Vec<f64>,
}

/// Three-stage fine-tuning: (1) head on frozen features, (2) layers `2..`
/// with the head, first layer frozen, (3) everything.
pub fn finetune_deep(
    layers: Vec<StackLayer>,
    data: &LabeledDataset,
    config: &DeepFinetuneConfig,
    mut on_stage: impl FnMut(&StageReport, &DeepStack),
) -> Result<(DeepStack, Vec<StageReport>)> {
    check_chain(&layers)?;
    let depth = layers.len();
    let epochs = config.stage_epochs();
    let feature_dim = layers.last().expect("checked").model.hidden_dim();
    let mut reports = Vec::with_capacity(3);

    let features = stack_features(&layers, &data.x)?;
    let stage1 = config.head.clone().unwrap_or_else(|| SupervisedConfig {
        epochs: epochs[0],
        ..config.base.clone()
    });
    let (head, hist) = train_head(SoftmaxHead::zeros(feature_dim, data.class_count), &features, &data.y, &stage1)
        .map_err(|e| e.context("fine-tune stage 1"))?;
    let mut stack = DeepStack::new(layers, head)?;
    let r = StageReport {
        stage: 1,
        description: "softmax head on frozen features",
        trainable_from: depth,
        epochs: epochs[0],
        loss_history: hist,
    };
    on_stage(&r, &stack);
    reports.push(r);

    for (stage, trainable_from, description) in [
        (2, 1.min(depth), "upper layers and head, first layer frozen"),
        (3, 0, "all layers and head"),
    ] {
        let cfg = SupervisedConfig {
            epochs: epochs[stage - 1],
            seed: config.base.seed.wrapping_add(stage as u64),
            ..config.base.clone()
        };
        let hist = finetune_layers(&mut stack, data, trainable_from, &cfg)
            .map_err(|e| e.context(format!("fine-tune stage {stage}")))?;
        let r = StageReport {
            stage,
            description,
            trainable_from,
            epochs: cfg.epochs,
            loss_history: hist,
        };
        on_stage(&r, &stack);
        reports.push(r);
    }
    Ok((stack, reports))
}

impl Classifier for DeepStack {
    fn input_dim(&self) -> usize {
        self.layers[0].model.input_dim()
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims("stack input", self.input_dim(), x.len()));
        }
        Ok(self.forward_sample(x)?.logits)
    }
}
