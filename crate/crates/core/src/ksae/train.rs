use super::config::{scheduled_k, TrainConfig};
use super::grad::backward;
use super::model::KsaeModel;
use super::optim::{sgd_momentum_step, OptimizerState};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Rng};

/// Shuffling stream index; stream 0 of the seed initialises weights.
pub const SHUFFLE_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub k: usize,
    pub mean_loss: f64,
    /// How many times each hidden unit appeared in a support this epoch.
    pub unit_usage: Vec<u64>,
}

impl EpochRecord {
    /// Units never selected during the epoch.
    pub fn dead_units(&self) -> usize {
        self.unit_usage.iter().filter(|&&c| c == 0).count()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: KsaeModel,
    pub history: Vec<EpochRecord>,
}

/// Weight initialisation used by [`train`] callers: stream 0 of the seed.
pub fn init_model(input_dim: usize, config: &TrainConfig) -> KsaeModel {
    let mut rng = Rng::stream(config.seed, 0);
    KsaeModel::init(input_dim, config.hidden_dim, config.init_sigma, &mut rng)
}

/// Runs mini-batch momentum SGD on the mean squared reconstruction error.
///
/// Each epoch visits the samples in a fresh seeded permutation; a trailing
/// partial batch is kept.
pub fn train(model: KsaeModel, data: &Matrix, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if model.hidden_dim() != config.hidden_dim {
        return Err(Error::dims("train (hidden_dim)", config.hidden_dim, model.hidden_dim()));
    }
    if data.cols() != model.input_dim() {
        return Err(Error::dims("train (input_dim)", model.input_dim(), data.cols()));
    }
    if data.rows() == 0 && config.epochs > 0 {
        return Err(Error::InvalidConfig("no training samples".into()));
    }
    let mut model = model;
    let mut rng = Rng::stream(config.seed, SHUFFLE_STREAM);
    let lengths: Vec<usize> = model.params_mut().iter().map(|p| p.len()).collect();
    let mut state = OptimizerState::new(&lengths);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        state.epoch = epoch;
        let k = scheduled_k(config, epoch);
        let m = config.momentum.value_at(epoch);
        let eta = config.learning_rate.value_at(epoch);
        let order = rng.permutation(data.rows());
        let mut usage = vec![0u64; config.hidden_dim];
        let mut loss_sum = 0.0;

        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = data.select_rows(chunk);
            let step = backward(&model, &batch, k)
                .map_err(|e| e.context(format!("epoch {epoch}, batch {b}")))?;
            for s in &step.supports {
                assert_eq!(s.k(), k.min(config.hidden_dim), "sparsity invariant violated");
                for &j in s.indices() {
                    usage[j] += 1;
                }
            }
            loss_sum += step.loss * chunk.len() as f64;
            let grads = step.grads.slices();
            sgd_momentum_step(&mut model.params_mut(), &grads, &mut state, m, eta, config.velocity_rule)
                .map_err(|e| e.context(format!("epoch {epoch}, batch {b}")))?;
        }
        let mean_loss = loss_sum / data.rows() as f64;
        if !mean_loss.is_finite() || !model.is_finite() {
            return Err(Error::NonFinite(format!("training diverged in epoch {epoch}")));
        }
        log::debug!("epoch {epoch}: k={k} loss={mean_loss:.6}");
        history.push(EpochRecord {
            epoch,
            k,
            mean_loss,
            unit_usage: usage,
        });
    }
    Ok(TrainOutcome { model, history })
}

/// Loss history as CSV with header `epoch,mean_loss,dead_units`.
pub fn loss_history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,mean_loss,dead_units\n");
    for r in history {
        out.push_str(&format!("{},{:e},{}\n", r.epoch, r.mean_loss, r.dead_units()));
    }
    out
}
