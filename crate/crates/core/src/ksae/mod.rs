//! The k-sparse autoencoder: a tied-weight linear autoencoder whose only
//! nonlinearity is keeping the `k` largest hidden activities.

mod config;
mod grad;
mod model;
mod optim;
mod train;

pub use config::{default_k_initial, scheduled_k, LinearSchedule, TrainConfig};
pub use grad::{
    backward, backward_on_supports, batch_loss_on_supports, path_gradients, BatchGradients, Gradients,
    PathGradients,
};
pub use model::{
    densify_codes, effective_k, encode_batch, encode_features, forward, loss, reconstruct, sparsify, KsaeModel,
    SparseCode,
};
pub use optim::{sgd_momentum_step, OptimizerState, VelocityRule};
pub use train::{init_model, loss_history_csv, train, EpochRecord, TrainOutcome, SHUFFLE_STREAM};
