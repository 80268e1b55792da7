//! The feed-forward anomaly detector: four linear layers, the first three
//! followed by batch norm, ReLU and dropout, ending in a single logit.
//!
//! Training runs in `f64` on one thread with fixed reduction order.

mod checkpoint;
mod loss;
mod matrix;
mod network;
mod optim;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use loss::{bce_with_logits, sigmoid};
pub use matrix::Matrix;
pub use network::{
    backward, forward, BatchNorm, ForwardCache, ForwardOutput, Linear, LinearGrad, MlpArchitecture,
    MlpGrads, MlpParams, Mode, NormGrad, TensorMut, TensorRef, HIDDEN_LAYERS,
};
pub use optim::{adamw_update, AdamHyper, AdamW};
pub use train::{
    predict_logits, score_fnn, steps_per_epoch, train, train_with_observer, BatchInfo, TrainConfig,
    TrainOutcome,
};
