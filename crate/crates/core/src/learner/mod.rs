//! Local training: datasets, the softmax-regression classifier, Adam, and
//! accuracy evaluation.

mod adam;
mod dataset;
mod idx;
mod model;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, OptimizerState};
pub use dataset::{partition, synth_blobs, BlobSource, Dataset};
pub use idx::{load_idx, load_idx_files, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use model::{cross_entropy_loss, gradient, predict_logits, Model};
pub use train::{evaluate, evaluate_with_loss, local_train, Evaluation};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty shard")]
    EmptyShard,
    #[error("need {needed} samples, dataset has {available}")]
    NotEnoughData { needed: usize, available: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("IDX count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("truncated IDX file: {0}")]
    TruncatedFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Local optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub samples_per_node: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 2,
            batch_size: 32,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            samples_per_node: 250,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |msg: &str| Err(LearnerError::InvalidParams(msg.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.samples_per_node == 0 {
            return bad("samples_per_node must be >= 1");
        }
        if self.batch_size > self.samples_per_node {
            return bad("batch_size must not exceed samples_per_node");
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must be in [0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }
}
