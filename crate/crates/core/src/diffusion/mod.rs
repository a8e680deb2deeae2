//! Noise schedules, denoisers, training and checkpoints.

mod checkpoint;
mod denoiser;
mod optim;
mod schedule;
mod toy;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use denoiser::{oracle_epsilon, Denoiser, GaussianOracleDenoiser};
pub use optim::{AdamW, AdamWConfig};
pub use schedule::{
    forward_noise, linear_schedule, NoiseSchedule, ScheduleConfig, SigmaRule, DEFAULT_BETA_FIRST, DEFAULT_BETA_LAST,
    DEFAULT_STEPS,
};
pub use toy::{ToyConfig, ToyDenoiser, Trainable};
pub use train::{train, training_step, EpochStats, StepStats, TrainConfig, TrainReport, TrainingExample};
