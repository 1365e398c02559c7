//! Recurrent next-action forecaster.
//!
//! A GRU or LSTM runs over the feature vectors of the `n_past` most recent
//! actions; its final hidden state goes through a one-hidden-layer tanh MLP
//! and a softmax over the action vocabulary. Gradients are exact
//! back-propagation through time, and parameters are updated with Adam.

mod adam;
mod checkpoint;
mod gradcheck;
mod linalg;
mod network;
mod predict;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, MAGIC};
pub use gradcheck::{gradient_check, GradCheck, GRADCHECK_FLOOR};
pub use linalg::{sigmoid, softmax};
pub use network::{gru_forward, lstm_forward, CellKind, CellParams, Model, TensorInfo};
pub use predict::{cross_entropy, filter_renormalize, predict_topk, PredictionDistribution, RankedAction};
pub use train::{evaluate, evaluate_with, metrics_csv, train, EpochMetrics, Evaluation, PositionRecord, TrainingRun};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub cell: CellKind,
    pub n_past: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            cell: CellKind::Gru,
            n_past: 5,
            hidden_size: 600,
            num_layers: 1,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 32,
            epochs: 10,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_past < 1 {
            return fail("n_past must be at least 1");
        }
        if self.hidden_size < 1 {
            return fail("hidden_size must be at least 1");
        }
        if self.num_layers < 1 {
            return fail("num_layers must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if self.batch_size < 1 {
            return fail("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return fail("adam_eps must be positive");
        }
        Ok(())
    }

    /// Width of the MLP head's hidden layer.
    pub fn head_width(&self) -> usize {
        (self.hidden_size / 2).max(1)
    }
}
