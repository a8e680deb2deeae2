//! Constrained diffusion sampling for two-channel piano rolls.

pub mod diffusion;
pub mod error;
pub mod guidance;
pub mod metrics;
pub mod midi;
pub mod pianoroll;
pub mod roll_io;
pub mod scalar;
pub mod theory;

pub use error::{FtgError, Result};
pub use scalar::Scalar;

pub type LatentRollF32 = pianoroll::LatentRoll<f32>;
pub type LatentRollF64 = pianoroll::LatentRoll<f64>;
pub type ModelInputF32 = pianoroll::ModelInput<f32>;
pub type ModelInputF64 = pianoroll::ModelInput<f64>;
pub type NoiseScheduleF32 = diffusion::NoiseSchedule<f32>;
pub type NoiseScheduleF64 = diffusion::NoiseSchedule<f64>;
pub type ToyDenoiserF32 = diffusion::ToyDenoiser<f32>;
pub type ToyDenoiserF64 = diffusion::ToyDenoiser<f64>;
pub type CheckpointF32 = diffusion::Checkpoint<f32>;
pub type CheckpointF64 = diffusion::Checkpoint<f64>;
pub type ConditionsF32 = guidance::Conditions<f32>;
pub type ConditionsF64 = guidance::Conditions<f64>;
