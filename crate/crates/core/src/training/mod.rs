//! Imitation learning of the guidance policy from MPC demonstrations.

mod dataset;
mod loss;
mod metrics;
mod train;

pub use dataset::{
    generate_dataset, label_rollout, Dataset, DatasetConfig, RowKind, Split, TrainingSample, DATASET_MAGIC,
    DATASET_VERSION, RECORD_BYTES,
};
pub use loss::{grad, loss, loss_and_grad, loss_parts, model_rollout, LossParts, LossWeights, VELOCITY_WEIGHT};
pub use metrics::{
    control_errors, embed, nearest_training_distance, training_sup_error, QueryPoint, EMBED_DIM,
};
pub use train::{
    fit_normalization, init_model, train, EarlyStop, EpochRecord, StopReason, TrainConfig, TrainResult,
    DIVERGENCE_LOSS,
};

#[cfg(test)]
mod tests;
