//! Desk-scale supervised learning: datasets, a small MLP with hand-written
//! backpropagation, and SGD/Adam.

mod data;
mod mnist;
mod model;
mod optim;

use thiserror::Error;

pub use data::{make_synthetic, partition, Dataset, Shard, SyntheticSpec, DEFAULT_SPREAD, DEFAULT_TEST_FRACTION};
pub use mnist::{
    load_mnist, load_mnist_dir, parse_idx_images, parse_idx_labels, MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS,
};
pub use model::{backward, evaluate, forward_loss, loss_and_gradient, MlpShape, ModelParams, DEFAULT_HIDDEN};
pub use optim::{
    optimizer_step, OptimizerConfig, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, DEFAULT_LEARNING_RATE,
};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("IDX format error in {field}: {reason}")]
    Format { field: &'static str, reason: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("cannot split {size} examples into {n} shards")]
    TooFewExamples { size: usize, n: usize },
    #[error(transparent)]
    Vector(#[from] crate::vecmath::VecMathError),
}
