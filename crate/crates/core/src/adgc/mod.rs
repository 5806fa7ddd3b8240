//! Attention-enhanced graph-convolutional LSTM synchronization classifier.
//!
//! A window of per-node coordinate sequences runs through a linear embedding,
//! a shared per-node LSTM over consecutive-frame feature pairs, and three
//! graph-convolutional LSTM layers with soft node attention. Global and local
//! readouts produce per-step class logits; the composite loss adds two
//! attention regularizers to the two cross-entropies. Training is Adam with
//! a step learning-rate schedule on an in-repo reverse-mode tape.

mod checkpoint;
mod forward;
mod model;
mod structure;
mod train;

pub use checkpoint::{load_model, save_model, CheckpointError, CHECKPOINT_VERSION};
pub use forward::{
    adgc_cell, attention_scores, augment_features, class_probs, composite_loss, forward_window,
    graph_conv, predict_window, readout, AdgcCellState, ForwardOutput, LossBreakdown, Readout,
    SharedLstmState,
};
pub use model::{ModelDims, SyncModel};
pub use structure::GraphStructure;
pub use train::{train, write_loss_curve, EpochLoss, TrainingWindow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdgcError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label is not one-hot")]
    LabelNotOneHot,
    #[error("class label {label} out of range for {classes} classes")]
    ClassOutOfRange { label: usize, classes: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss in term {term} at epoch {epoch}")]
    NanLoss { term: &'static str, epoch: usize },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Training hyperparameters. The defaults are the published configuration:
/// window length 40, regularizer weights 0.01 and 0.001, Adam at 5e-4 decayed
/// by 0.1 every 15 epochs.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Window length T.
    pub window_len: usize,
    /// Attention-coverage regularizer weight λ̄.
    pub lambda_bar: f64,
    /// Attention-count regularizer weight β̄.
    pub beta_bar: f64,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_epochs: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window_len: 40,
            lambda_bar: 0.01,
            beta_bar: 0.001,
            learning_rate: 0.0005,
            lr_decay_factor: 0.1,
            lr_decay_epochs: 15,
            epochs: 60,
            seed: 0,
        }
    }
}
