//! Small multilayer perceptron trained with an added compressibility penalty.

pub mod data;
pub mod desk;
pub mod model;
pub mod penalty;
pub mod train;

pub use data::{gaussian_blobs, linearly_separable, BlobSpec, Dataset};
pub use model::{flatten_weights, Activation, Layer, ModelParams};
pub use penalty::{
    CompressibilityPenalty, Concatenated, PenaltyOptions, PenaltyRegistry, PerLayer,
};
pub use train::{
    accuracy, combined_gradient, combined_loss, load_checkpoint, save_checkpoint, train,
    EpochRecord, LambdaSchedule, LossBreakdown, LossMode, TrainConfig, TrainOutcome,
};
