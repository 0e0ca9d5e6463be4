//! Optimization: Adam, the training schedule, and checkpointing.

pub mod adam;
pub mod checkpoint;
pub mod trainer;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use trainer::{
    cluster_epochs, train, Ablation, EpochRecord, TrainConfig, TrainedModel,
};
