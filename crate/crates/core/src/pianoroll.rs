//! Piano-roll data model.
//!
//! Every roll is a dense `channels × length × pitches` grid stored row-major in
//! `(channel, step, pitch)` order. Channel 0 carries note onsets and channel 1
//! note sustains. Pitch count is 128 for real music; tests use narrower grids.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FtgError, Result};
use crate::scalar::{half, Scalar};
use crate::theory::{ChordProgression, ConstraintMask, RhythmPattern};

pub const ONSET: usize = 0;
pub const SUSTAIN: usize = 1;
/// Number of MIDI pitch slots.
pub const PITCHES: usize = 128;
/// Channel count of a note roll.
pub const ROLL_CHANNELS: usize = 2;
/// Channel count of the denoiser input: latent, condition, melody.
pub const MODEL_CHANNELS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub length: usize,
    pub pitches: usize,
}

impl Shape {
    pub const fn new(channels: usize, length: usize, pitches: usize) -> Self {
        Self { channels, length, pitches }
    }

    /// Two-channel roll shape.
    pub const fn roll(length: usize, pitches: usize) -> Self {
        Self::new(ROLL_CHANNELS, length, pitches)
    }

    pub const fn numel(&self) -> usize {
        self.channels * self.length * self.pitches
    }

    #[inline]
    pub const fn index(&self, channel: usize, step: usize, pitch: usize) -> usize {
        (channel * self.length + step) * self.pitches + pitch
    }

    /// Number of cells in one channel plane.
    pub const fn plane(&self) -> usize {
        self.length * self.pitches
    }

    pub(crate) fn check_same(&self, other: &Shape) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(FtgError::ShapeMismatch { expected: *self, got: *other })
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.length, self.pitches)
    }
}

/// A note event on the 16th-note grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Note {
    pub start: usize,
    pub duration: usize,
    pub pitch: usize,
}

/// Binary onset/sustain grid.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PianoRoll {
    shape: Shape,
    cells: Vec<u8>,
}

impl fmt::Debug for PianoRoll {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PianoRoll")
            .field("shape", &self.shape)
            .field("active", &self.cells.iter().filter(|&&c| c == 1).count())
            .finish()
    }
}

impl PianoRoll {
    pub fn zeros(length: usize, pitches: usize) -> Self {
        let shape = Shape::roll(length, pitches);
        Self { shape, cells: vec![0; shape.numel()] }
    }

    /// Builds a roll from raw cells, rejecting anything outside `{0, 1}`.
    pub fn from_cells(shape: Shape, cells: Vec<u8>) -> Result<Self> {
        if shape.channels != ROLL_CHANNELS {
            return Err(FtgError::InvalidInput(format!(
                "piano roll needs {ROLL_CHANNELS} channels, got {}",
                shape.channels
            )));
        }
        if cells.len() != shape.numel() {
            return Err(FtgError::LengthMismatch { expected: shape.numel(), got: cells.len() });
        }
        if let Some(i) = cells.iter().position(|&c| c > 1) {
            return Err(FtgError::InvalidInput(format!("non-binary cell at flat index {i}")));
        }
        Ok(Self { shape, cells })
    }

    /// Renders notes onto an empty grid. Overlapping notes of one pitch merge:
    /// an onset always wins over a sustain in the same cell.
    pub fn from_notes(length: usize, pitches: usize, notes: &[Note]) -> Result<Self> {
        let mut roll = Self::zeros(length, pitches);
        for n in notes {
            if n.pitch >= pitches || n.start >= length || n.duration == 0 {
                return Err(FtgError::InvalidInput(format!("note out of range: {n:?}")));
            }
            let end = (n.start + n.duration).min(length);
            for l in n.start + 1..end {
                if !roll.get(ONSET, l, n.pitch) {
                    roll.set(SUSTAIN, l, n.pitch, true);
                }
            }
        }
        for n in notes {
            roll.set(ONSET, n.start, n.pitch, true);
            roll.set(SUSTAIN, n.start, n.pitch, false);
        }
        Ok(roll)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn length(&self) -> usize {
        self.shape.length
    }

    pub fn pitches(&self) -> usize {
        self.shape.pitches
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, channel: usize, step: usize, pitch: usize) -> bool {
        self.cells[self.shape.index(channel, step, pitch)] == 1
    }

    #[inline]
    pub fn set(&mut self, channel: usize, step: usize, pitch: usize, on: bool) {
        let i = self.shape.index(channel, step, pitch);
        self.cells[i] = u8::from(on);
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().all(|&c| c == 0)
    }

    pub fn onset_count(&self) -> usize {
        self.cells[..self.shape.plane()].iter().filter(|&&c| c == 1).count()
    }

    /// Onset pitches at one step.
    pub fn onsets_at(&self, step: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.shape.pitches).filter(move |&h| self.get(ONSET, step, h))
    }

    /// True when every sustain continues an onset or sustain one step earlier
    /// on the same pitch. A bare sustain at step 0 is allowed.
    pub fn is_well_formed(&self) -> bool {
        (1..self.shape.length).all(|l| {
            (0..self.shape.pitches).all(|h| {
                !self.get(SUSTAIN, l, h) || self.get(ONSET, l - 1, h) || self.get(SUSTAIN, l - 1, h)
            })
        })
    }

    /// Extracts notes: each onset extends over the following sustain run.
    /// Sustain runs with no onset are ignored, including a bare sustain at step 0.
    pub fn notes(&self) -> Vec<Note> {
        let mut notes = Vec::new();
        for l in 0..self.shape.length {
            for h in 0..self.shape.pitches {
                if !self.get(ONSET, l, h) {
                    continue;
                }
                let mut end = l + 1;
                while end < self.shape.length && self.get(SUSTAIN, end, h) && !self.get(ONSET, end, h) {
                    end += 1;
                }
                notes.push(Note { start: l, duration: end - l, pitch: h });
            }
        }
        notes
    }

    /// Shifts every note by `semitones`, dropping notes that leave the pitch range.
    pub fn transpose(&self, semitones: i32) -> Self {
        let mut out = Self::zeros(self.shape.length, self.shape.pitches);
        for c in 0..ROLL_CHANNELS {
            for l in 0..self.shape.length {
                for h in 0..self.shape.pitches {
                    let target = h as i64 + semitones as i64;
                    if self.get(c, l, h) && (0..self.shape.pitches as i64).contains(&target) {
                        out.set(c, l, target as usize, true);
                    }
                }
            }
        }
        out
    }

    /// Copies steps `[start, start + length)`; steps past the end stay empty.
    pub fn window(&self, start: usize, length: usize) -> Self {
        let mut out = Self::zeros(length, self.shape.pitches);
        let avail = self.shape.length.saturating_sub(start).min(length);
        for c in 0..ROLL_CHANNELS {
            for l in 0..avail {
                let src = self.shape.index(c, start + l, 0);
                let dst = out.shape.index(c, l, 0);
                out.cells[dst..dst + self.shape.pitches]
                    .copy_from_slice(&self.cells[src..src + self.shape.pitches]);
            }
        }
        out
    }

    pub fn to_latent<S: Scalar>(&self) -> LatentRoll<S> {
        LatentRoll {
            shape: self.shape,
            data: self.cells.iter().map(|&c| if c == 1 { S::one() } else { S::zero() }).collect(),
        }
    }
}

/// Real-valued two-channel grid: the diffusion state and noise predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentRoll<S = f64> {
    shape: Shape,
    data: Vec<S>,
}

impl<S: Scalar> LatentRoll<S> {
    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![S::zero(); shape.numel()] }
    }

    pub fn filled(shape: Shape, value: S) -> Self {
        Self { shape, data: vec![value; shape.numel()] }
    }

    /// Wraps raw values after checking length and finiteness.
    pub fn from_vec(shape: Shape, data: Vec<S>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(FtgError::LengthMismatch { expected: shape.numel(), got: data.len() });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(FtgError::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// Mutable access to the raw values; callers keep them finite.
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn get(&self, channel: usize, step: usize, pitch: usize) -> S {
        self.data[self.shape.index(channel, step, pitch)]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, step: usize, pitch: usize, value: S) {
        let i = self.shape.index(channel, step, pitch);
        self.data[i] = value;
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(FtgError::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Elementwise combination of two equally shaped rolls.
    pub fn zip_with(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.shape.check_same(&other.shape)?;
        Ok(Self {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn norm(&self) -> S {
        self.data.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    pub fn distance(&self, other: &Self) -> S {
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b) * (a - b)).sum::<S>().sqrt()
    }

    pub fn cast<T: Scalar>(&self) -> LatentRoll<T> {
        LatentRoll {
            shape: self.shape,
            data: self.data.iter().map(|&v| T::lit(v.to_f64_lossy())).collect(),
        }
    }
}

/// Which of the two condition encodings a [`ConditionRoll`] carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionForm {
    /// Chord and rhythm: values in `{0, 1}`.
    ChordRhythm,
    /// Chord only: values in `{-2, -1}`.
    ChordOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionRoll<S = f64> {
    form: ConditionForm,
    grid: LatentRoll<S>,
}

impl<S: Scalar> ConditionRoll<S> {
    /// Wraps a grid after checking its values against the tagged form.
    pub fn new(form: ConditionForm, grid: LatentRoll<S>) -> Result<Self> {
        let (lo, hi) = match form {
            ConditionForm::ChordRhythm => (S::zero(), S::one()),
            ConditionForm::ChordOnly => (S::lit(-2.0), S::lit(-1.0)),
        };
        if let Some(i) = grid.data().iter().position(|&v| v != lo && v != hi) {
            return Err(FtgError::InvalidInput(format!(
                "condition value {} at {i} not valid for {form:?}",
                grid.data()[i]
            )));
        }
        if grid.shape().channels != ROLL_CHANNELS {
            return Err(FtgError::InvalidInput("condition roll needs 2 channels".into()));
        }
        Ok(Self { form, grid })
    }

    pub fn form(&self) -> ConditionForm {
        self.form
    }

    pub fn grid(&self) -> &LatentRoll<S> {
        &self.grid
    }

    pub fn shape(&self) -> Shape {
        self.grid.shape()
    }
}

/// Six-channel denoiser input: `[x_t (2), condition (2), melody (2)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput<S = f64> {
    length: usize,
    pitches: usize,
    data: Vec<S>,
}

impl<S: Scalar> ModelInput<S> {
    pub fn shape(&self) -> Shape {
        Shape::new(MODEL_CHANNELS, self.length, self.pitches)
    }

    pub fn latent_shape(&self) -> Shape {
        Shape::roll(self.length, self.pitches)
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// One channel plane as a contiguous slice.
    pub fn channel(&self, c: usize) -> &[S] {
        let plane = self.length * self.pitches;
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Two-channel block starting at `first` (0 = latent, 2 = condition, 4 = melody).
    pub fn block(&self, first: usize) -> LatentRoll<S> {
        let plane = self.length * self.pitches;
        LatentRoll {
            shape: self.latent_shape(),
            data: self.data[first * plane..(first + 2) * plane].to_vec(),
        }
    }
}

/// `M = 1{X >= 1/2}` per cell. With a mask, out-of-key positions are forced to
/// 0 whenever the value is at most 1/2, so the boundary tie favors the constraint.
pub fn binarize<S: Scalar>(latent: &LatentRoll<S>, mask: Option<&ConstraintMask>) -> Result<PianoRoll> {
    latent.check_finite()?;
    let shape = latent.shape();
    if shape.channels != ROLL_CHANNELS {
        return Err(FtgError::InvalidInput("binarize expects a 2-channel latent".into()));
    }
    if let Some(m) = mask {
        m.check_dims(shape.length, shape.pitches)?;
    }
    let threshold = half::<S>();
    let mut cells: Vec<u8> = latent.data().iter().map(|&v| u8::from(v >= threshold)).collect();
    if let Some(m) = mask {
        for c in 0..ROLL_CHANNELS {
            for l in 0..shape.length {
                for h in 0..shape.pitches {
                    let i = shape.index(c, l, h);
                    if m.is_out_of_key(l, h) && latent.data()[i] <= threshold {
                        cells[i] = 0;
                    }
                }
            }
        }
    }
    Ok(PianoRoll { shape, cells })
}

/// Chord-and-rhythm condition: onset channel marks chord tones at rhythm onsets,
/// sustain channel marks chord tones at every other step.
pub fn build_condition_cr<S: Scalar>(
    chords: &ChordProgression,
    rhythm: &RhythmPattern,
    pitches: usize,
) -> Result<ConditionRoll<S>> {
    let length = rhythm.length();
    if chords.len() < length {
        return Err(FtgError::LengthMismatch { expected: length, got: chords.len() });
    }
    let mut grid = LatentRoll::zeros(Shape::roll(length, pitches));
    for l in 0..length {
        let tones = chords.pitch_classes_at(l);
        let channel = if rhythm.contains(l) { ONSET } else { SUSTAIN };
        for h in 0..pitches {
            if tones.contains_pitch(h) {
                grid.set(channel, l, h, S::one());
            }
        }
    }
    ConditionRoll::new(ConditionForm::ChordRhythm, grid)
}

/// Chord-only condition: `-2` on chord tones, `-1` elsewhere, both channels.
pub fn build_condition_c<S: Scalar>(
    chords: &ChordProgression,
    length: usize,
    pitches: usize,
) -> Result<ConditionRoll<S>> {
    if chords.len() < length {
        return Err(FtgError::LengthMismatch { expected: length, got: chords.len() });
    }
    let mut grid = LatentRoll::filled(Shape::roll(length, pitches), S::lit(-1.0));
    for l in 0..length {
        let tones = chords.pitch_classes_at(l);
        for h in (0..pitches).filter(|&h| tones.contains_pitch(h)) {
            grid.set(ONSET, l, h, S::lit(-2.0));
            grid.set(SUSTAIN, l, h, S::lit(-2.0));
        }
    }
    ConditionRoll::new(ConditionForm::ChordOnly, grid)
}

/// Stacks latent, condition and optional melody into the denoiser input.
pub fn concat_model_input<S: Scalar>(
    x_t: &LatentRoll<S>,
    cond: &ConditionRoll<S>,
    melody: Option<&PianoRoll>,
) -> Result<ModelInput<S>> {
    let shape = x_t.shape();
    if shape.channels != ROLL_CHANNELS {
        return Err(FtgError::InvalidInput("latent must have 2 channels".into()));
    }
    shape.check_same(&cond.shape())?;
    if let Some(m) = melody {
        shape.check_same(&m.shape())?;
    }
    let mut data = Vec::with_capacity(shape.numel() * 3);
    data.extend_from_slice(x_t.data());
    data.extend_from_slice(cond.grid().data());
    match melody {
        Some(m) => data.extend(m.cells().iter().map(|&c| if c == 1 { S::one() } else { S::zero() })),
        None => data.resize(shape.numel() * 3, S::zero()),
    }
    Ok(ModelInput { length: shape.length, pitches: shape.pitches, data })
}
