//! The reference desk-scale task: a Gaussian-mixture classification set and
//! an 8-32-32-4 tanh network trained with plain SGD.

use super::data::{gaussian_blobs, BlobSpec, Dataset};
use super::model::{Activation, ModelParams};
use super::train::{LambdaSchedule, TrainConfig};
use crate::error::{DataError, TrainError};

pub const BLOBS: BlobSpec = BlobSpec {
    samples: 2000,
    dim: 8,
    classes: 4,
    modes: 3,
    spread: 0.25,
};

pub const HIDDEN: usize = 32;
pub const EVAL_FRACTION: f64 = 0.25;
pub const EPOCHS: usize = 60;
pub const BATCH_SIZE: usize = 32;
pub const LEARNING_RATE: f64 = 0.1;

/// Train and eval splits of the reference data.
pub fn data(seed: u64) -> Result<(Dataset, Dataset), DataError> {
    gaussian_blobs(BLOBS, seed)?.split(EVAL_FRACTION, seed)
}

pub fn model(seed: u64) -> Result<ModelParams, TrainError> {
    ModelParams::init(
        &[BLOBS.dim, HIDDEN, HIDDEN, BLOBS.classes],
        true,
        Activation::Tanh,
        seed,
    )
}

pub fn config(schedule: LambdaSchedule, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: EPOCHS,
        batch_size: BATCH_SIZE,
        learning_rate: LEARNING_RATE,
        seed,
        schedule,
        ..TrainConfig::default()
    }
}
