//! AdamW with warmup-cosine scheduling, the epoch loop, and gradient checks.

mod adamw;
mod config;
mod gradcheck;
mod schedule;
mod trainer;

pub use adamw::{adamw_step, adamw_update, AdamWState, BETA1, BETA2, EPSILON};
pub use config::{Precision, TrainConfig};
pub use gradcheck::{compare_with_finite_differences, gradient_check, GradCheckReport, ENTRIES_PER_TENSOR};
pub use schedule::lr_at;
pub use trainer::{
    accuracy, fit, holdout_split, iterations_per_epoch, train_epoch, Checkpoint, EpochMetrics,
    EpochSnapshot, FitOutput, Trainer,
};
