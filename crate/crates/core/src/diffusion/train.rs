use std::borrow::Borrow;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::optim::{AdamW, AdamWConfig};
use super::schedule::{forward_noise, NoiseSchedule};
use super::toy::Trainable;
use crate::error::{FtgError, Result};
use crate::pianoroll::{build_condition_c, build_condition_cr, concat_model_input, LatentRoll, PianoRoll, Shape};
use crate::scalar::Scalar;
use crate::theory::{recognize_chords, ChordProgression, RhythmPattern};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    /// Probability of training a sample on the chord-only condition.
    pub p_drop: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 16, optimizer: AdamWConfig::default(), p_drop: 0.5, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_drop) {
            return Err(FtgError::InvalidInput(format!("p_drop {} outside [0, 1]", self.p_drop)));
        }
        if self.batch_size == 0 {
            return Err(FtgError::InvalidInput("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// One training piece: the clean accompaniment and its conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample<S = f64> {
    pub x0: LatentRoll<S>,
    pub chords: ChordProgression,
    pub rhythm: RhythmPattern,
    pub melody: Option<PianoRoll>,
}

impl<S: Scalar> TrainingExample<S> {
    /// Derives the chord condition by recognition at `chord_granularity` and the
    /// rhythm from the accompaniment's onset steps.
    pub fn from_rolls(accompaniment: &PianoRoll, melody: Option<PianoRoll>, chord_granularity: usize) -> Result<Self> {
        Ok(Self {
            x0: accompaniment.to_latent(),
            chords: recognize_chords(accompaniment, chord_granularity)?,
            rhythm: RhythmPattern::from_roll(accompaniment),
            melody,
        })
    }

    fn shape(&self) -> Shape {
        self.x0.shape()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub loss: f64,
    pub n_chord_only: usize,
    pub n_chord_rhythm: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub n_chord_only: usize,
    pub n_chord_rhythm: usize,
}

/// One optimizer update on `batch`: per sample, draws `t` uniformly from
/// `[1, T]` and `ε ~ N(0, I)`, picks the chord-only condition with probability
/// `p_drop`, and regresses the model output on `ε`.
pub fn training_step<S: Scalar, M: Trainable<S>, E: Borrow<TrainingExample<S>>>(
    model: &mut M,
    opt: &mut AdamW<S>,
    batch: &[E],
    config: &TrainConfig,
    sched: &NoiseSchedule<S>,
    rng: &mut impl Rng,
) -> Result<StepStats> {
    config.validate()?;
    let Some(first) = batch.first() else {
        return Err(FtgError::InvalidInput("empty training batch".into()));
    };
    let shape = first.borrow().shape();
    for ex in batch {
        shape.check_same(&ex.borrow().shape())?;
    }
    let mut grads = vec![S::zero(); model.params().len()];
    let weight = S::one() / S::lit(batch.len() as f64);
    let mut stats = StepStats::default();
    let mut total = 0.0;
    for ex in batch {
        let ex = ex.borrow();
        let t = rng.random_range(1..=sched.steps());
        let noise: Vec<S> = (0..shape.numel()).map(|_| S::lit(StandardNormal.sample(&mut *rng))).collect();
        let eps = LatentRoll::from_vec(shape, noise)?;
        let x_t = forward_noise(&ex.x0, t, &eps, sched)?;
        let cond = if rng.random::<f64>() < config.p_drop {
            stats.n_chord_only += 1;
            build_condition_c(&ex.chords, shape.length, shape.pitches)?
        } else {
            stats.n_chord_rhythm += 1;
            build_condition_cr(&ex.chords, &ex.rhythm, shape.pitches)?
        };
        let input = concat_model_input(&x_t, &cond, ex.melody.as_ref())?;
        let loss = model.loss_and_grad(&input, t, &eps, weight, &mut grads)?;
        total += loss.to_f64_lossy();
    }
    stats.loss = total / batch.len() as f64;
    if !stats.loss.is_finite() {
        return Err(FtgError::NonFinite { index: 0 });
    }
    opt.step(model.params_mut(), &grads)?;
    Ok(stats)
}

/// Runs `config.epochs` shuffled passes over `data`, calling `on_epoch` after each.
pub fn train<S: Scalar, M: Trainable<S>>(
    model: &mut M,
    data: &[TrainingExample<S>],
    config: &TrainConfig,
    sched: &NoiseSchedule<S>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(FtgError::InvalidInput("empty training set".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut opt = AdamW::new(config.optimizer.clone(), model.params().len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainingExample<S>> = chunk.iter().map(|&i| &data[i]).collect();
            let stats = training_step(model, &mut opt, &batch, config, sched, &mut rng)?;
            report.n_chord_only += stats.n_chord_only;
            report.n_chord_rhythm += stats.n_chord_rhythm;
            sum += stats.loss;
            steps += 1;
        }
        let stats = EpochStats { epoch, mean_loss: sum / steps as f64, steps };
        on_epoch(&stats);
        report.epochs.push(stats);
    }
    Ok(report)
}
