//! Classifier-free guidance, constraint corrections and the reverse samplers.

mod correct;
mod sampler;

pub use correct::{
    correct_harmonic, correct_joint, correct_rhythm, off_cost, on_cost, predict_x0, Correction, DEFAULT_KAPPA,
};
pub use sampler::{
    cfg_combine, ddim_step, ddim_timesteps, ddpm_step, reverse_step, sample, sample_traced, Conditions,
    GuidanceConfig, SampleOutput, SamplerPlan, DEFAULT_DDIM_STEPS,
};
