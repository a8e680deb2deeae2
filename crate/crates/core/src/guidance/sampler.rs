use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::correct::{predict_x0, Correction, DEFAULT_KAPPA};
use crate::diffusion::{Denoiser, NoiseSchedule};
use crate::error::{FtgError, Result};
use crate::pianoroll::{
    binarize, build_condition_c, build_condition_cr, concat_model_input, ConditionRoll, LatentRoll, PianoRoll, Shape,
};
use crate::scalar::Scalar;
use crate::theory::{ChordProgression, ConstraintMask, RhythmPattern};

/// Default DDIM subsequence length.
pub const DEFAULT_DDIM_STEPS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    /// Classifier-free guidance weight; `None` means 1 when a rhythm condition
    /// is present and 0 otherwise.
    pub w: Option<f64>,
    pub harmonic: bool,
    pub rhythm: bool,
    pub kappa: f64,
    /// Force zero noise on the last reverse step.
    pub final_step_deterministic: bool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self { w: None, harmonic: true, rhythm: true, kappa: DEFAULT_KAPPA, final_step_deterministic: true }
    }
}

impl GuidanceConfig {
    /// No corrections; plain classifier-free guidance.
    pub fn unguided() -> Self {
        Self { harmonic: false, rhythm: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 0.5) {
            return Err(FtgError::InvalidInput(format!("kappa {} outside (0, 1/2)", self.kappa)));
        }
        if let Some(w) = self.w {
            if !w.is_finite() {
                return Err(FtgError::InvalidInput("guidance weight must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Reverse-process plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SamplerPlan {
    /// Every step `T, T−1, …, 1` with the schedule's own σ.
    Ddpm,
    /// Strictly increasing subsequence `τ_1 < … < τ_m` visited from the top.
    Ddim { steps: Vec<usize>, eta: f64 },
}

impl Default for SamplerPlan {
    fn default() -> Self {
        SamplerPlan::Ddim { steps: ddim_timesteps(DEFAULT_DDIM_STEPS, crate::diffusion::DEFAULT_STEPS), eta: 0.0 }
    }
}

impl SamplerPlan {
    pub fn ddim(count: usize, total: usize, eta: f64) -> Self {
        SamplerPlan::Ddim { steps: ddim_timesteps(count, total), eta }
    }

    pub fn validate(&self, total: usize) -> Result<()> {
        if let SamplerPlan::Ddim { steps, eta } = self {
            if steps.is_empty() {
                return Err(FtgError::InvalidInput("empty DDIM subsequence".into()));
            }
            if steps.windows(2).any(|w| w[0] >= w[1]) {
                return Err(FtgError::InvalidInput("DDIM subsequence must be strictly increasing".into()));
            }
            if steps[0] == 0 || *steps.last().expect("nonempty") > total {
                return Err(FtgError::InvalidInput(format!("DDIM subsequence must lie in [1, {total}]")));
            }
            if !(0.0..=1.0).contains(eta) {
                return Err(FtgError::InvalidInput(format!("eta {eta} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Pairs `(t, prev)` in visiting order.
    fn transitions(&self, total: usize) -> Vec<(usize, usize)> {
        match self {
            SamplerPlan::Ddpm => (1..=total).rev().map(|t| (t, t - 1)).collect(),
            SamplerPlan::Ddim { steps, .. } => {
                (0..steps.len()).rev().map(|i| (steps[i], if i == 0 { 0 } else { steps[i - 1] })).collect()
            }
        }
    }
}

/// `count` steps evenly spaced over `[1, total]`, rounded and deduplicated.
pub fn ddim_timesteps(count: usize, total: usize) -> Vec<usize> {
    if count == 0 || total == 0 {
        return Vec::new();
    }
    if count == 1 {
        return vec![total];
    }
    let mut steps: Vec<usize> = (0..count)
        .map(|i| (1.0 + (total - 1) as f64 * i as f64 / (count - 1) as f64).round() as usize)
        .collect();
    steps.dedup();
    steps
}

/// `(1−w)·ε_C + w·ε_{C,R}`, the classifier-free combination.
pub fn cfg_combine<S: Scalar>(eps_c: &LatentRoll<S>, eps_cr: &LatentRoll<S>, w: S) -> Result<LatentRoll<S>> {
    eps_c.zip_with(eps_cr, |c, r| (S::one() - w) * c + w * r)
}

/// One reverse update `t → prev`:
/// `√ᾱ_prev·x̂_0 + √(1−ᾱ_prev−σ²)·ε̃ + σ·noise`.
pub fn reverse_step<S: Scalar>(
    x_t: &LatentRoll<S>,
    eps: &LatentRoll<S>,
    t: usize,
    prev: usize,
    sigma: S,
    sched: &NoiseSchedule<S>,
    noise: &LatentRoll<S>,
) -> Result<LatentRoll<S>> {
    if prev >= t {
        return Err(FtgError::InvalidInput(format!("reverse step needs prev < t, got {prev} >= {t}")));
    }
    x_t.shape().check_same(&noise.shape())?;
    let x0 = predict_x0(x_t, eps, t, sched)?;
    let a_prev = sched.alpha_bar(prev);
    let dir = S::one() - a_prev - sigma * sigma;
    if dir < S::lit(-1e-12) {
        return Err(FtgError::Schedule(format!("1 - alpha_bar({prev}) - sigma^2 = {dir} is negative")));
    }
    let (k0, ke) = (a_prev.sqrt(), dir.max(S::zero()).sqrt());
    let data = x0
        .data()
        .iter()
        .zip(eps.data())
        .zip(noise.data())
        .map(|((&x, &e), &z)| k0 * x + ke * e + sigma * z)
        .collect();
    LatentRoll::from_vec(x_t.shape(), data)
}

/// Consecutive step with the schedule's σ_t.
pub fn ddpm_step<S: Scalar>(
    x_t: &LatentRoll<S>,
    eps: &LatentRoll<S>,
    t: usize,
    sched: &NoiseSchedule<S>,
    noise: &LatentRoll<S>,
) -> Result<LatentRoll<S>> {
    sched.check_step(t)?;
    reverse_step(x_t, eps, t, t - 1, sched.sigma(t), sched, noise)
}

/// Jump `t → prev` with σ at stochasticity `eta`.
pub fn ddim_step<S: Scalar>(
    x_t: &LatentRoll<S>,
    eps: &LatentRoll<S>,
    t: usize,
    prev: usize,
    eta: S,
    sched: &NoiseSchedule<S>,
    noise: &LatentRoll<S>,
) -> Result<LatentRoll<S>> {
    sched.check_step(t)?;
    reverse_step(x_t, eps, t, prev, sched.sigma_between(t, prev, eta), sched, noise)
}

/// Everything the sampler conditions on.
#[derive(Clone, Debug)]
pub struct Conditions<S = f64> {
    pub chord_only: ConditionRoll<S>,
    pub chord_rhythm: Option<ConditionRoll<S>>,
    pub melody: Option<PianoRoll>,
    pub mask: ConstraintMask,
}

impl<S: Scalar> Conditions<S> {
    pub fn new(
        chords: &ChordProgression,
        rhythm: Option<&RhythmPattern>,
        melody: Option<PianoRoll>,
        mask: ConstraintMask,
    ) -> Result<Self> {
        let (length, pitches) = (mask.length(), mask.pitches());
        let chord_only = build_condition_c(chords, length, pitches)?;
        let chord_rhythm = match rhythm {
            Some(r) => {
                if r.length() != length {
                    return Err(FtgError::LengthMismatch { expected: length, got: r.length() });
                }
                Some(build_condition_cr(chords, r, pitches)?)
            }
            None => None,
        };
        if let Some(m) = &melody {
            Shape::roll(length, pitches).check_same(&m.shape())?;
        }
        Ok(Self { chord_only, chord_rhythm, melody, mask })
    }

    pub fn shape(&self) -> Shape {
        self.chord_only.shape()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutput<S = f64> {
    /// Final latent `x̃_0`.
    pub latent: LatentRoll<S>,
    pub roll: PianoRoll,
}

/// Runs the reverse process from seeded standard-normal noise, combining the
/// two conditional predictions and applying the configured corrections at every
/// step.
pub fn sample<S: Scalar, D: Denoiser<S> + ?Sized>(
    denoiser: &D,
    conditions: &Conditions<S>,
    guidance: &GuidanceConfig,
    plan: &SamplerPlan,
    sched: &NoiseSchedule<S>,
    seed: u64,
) -> Result<SampleOutput<S>> {
    run(denoiser, conditions, guidance, plan, sched, seed, None)
}

/// Like [`sample`], also returning the state after every reverse step.
pub fn sample_traced<S: Scalar, D: Denoiser<S> + ?Sized>(
    denoiser: &D,
    conditions: &Conditions<S>,
    guidance: &GuidanceConfig,
    plan: &SamplerPlan,
    sched: &NoiseSchedule<S>,
    seed: u64,
) -> Result<(SampleOutput<S>, Vec<LatentRoll<S>>)> {
    let mut trace = Vec::new();
    let out = run(denoiser, conditions, guidance, plan, sched, seed, Some(&mut trace))?;
    Ok((out, trace))
}

fn draw<S: Scalar>(shape: Shape, rng: &mut ChaCha20Rng) -> LatentRoll<S> {
    let data = (0..shape.numel()).map(|_| S::lit(StandardNormal.sample(&mut *rng))).collect();
    LatentRoll::from_vec(shape, data).expect("shape-sized buffer")
}

fn run<S: Scalar, D: Denoiser<S> + ?Sized>(
    denoiser: &D,
    conditions: &Conditions<S>,
    guidance: &GuidanceConfig,
    plan: &SamplerPlan,
    sched: &NoiseSchedule<S>,
    seed: u64,
    mut trace: Option<&mut Vec<LatentRoll<S>>>,
) -> Result<SampleOutput<S>> {
    guidance.validate()?;
    plan.validate(sched.steps())?;
    let shape = conditions.shape();
    let mask = &conditions.mask;
    let w = S::lit(guidance.w.unwrap_or(if conditions.chord_rhythm.is_some() { 1.0 } else { 0.0 }));
    let kappa = S::lit(guidance.kappa);
    let correction = Correction::from_flags(guidance.harmonic, guidance.rhythm && mask.has_rhythm());
    let eta = match plan {
        SamplerPlan::Ddpm => None,
        SamplerPlan::Ddim { eta, .. } => Some(S::lit(*eta)),
    };

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut x = draw::<S>(shape, &mut rng);
    for (t, prev) in plan.transitions(sched.steps()) {
        let predict = |cond: &ConditionRoll<S>| -> Result<LatentRoll<S>> {
            let input = concat_model_input(&x, cond, conditions.melody.as_ref())?;
            let eps = denoiser.predict(&input, t)?;
            shape.check_same(&eps.shape())?;
            Ok(eps)
        };
        let eps_hat = match &conditions.chord_rhythm {
            None => predict(&conditions.chord_only)?,
            Some(cr) if w == S::one() => predict(cr)?,
            Some(_) if w == S::zero() => predict(&conditions.chord_only)?,
            Some(cr) => cfg_combine(&predict(&conditions.chord_only)?, &predict(cr)?, w)?,
        };
        eps_hat.check_finite()?;
        let eps = correction.apply(&eps_hat, &x, t, mask, kappa, sched)?;
        let noise = draw::<S>(shape, &mut rng);
        let mut sigma = match eta {
            None => sched.sigma(t),
            Some(eta) => sched.sigma_between(t, prev, eta),
        };
        if prev == 0 && guidance.final_step_deterministic {
            sigma = S::zero();
        }
        x = reverse_step(&x, &eps, t, prev, sigma, sched, &noise)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(x.clone());
        }
    }
    let roll = binarize(&x, Some(mask))?;
    Ok(SampleOutput { latent: x, roll })
}
