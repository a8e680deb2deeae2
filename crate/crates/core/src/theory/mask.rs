use std::collections::BTreeMap;

use super::key::{out_of_key_pitch_classes, KeySequence, KeySignature};
use super::pitch::PitchClassSet;
use super::rhythm::RhythmConstraint;
use crate::error::{FtgError, Result};
use crate::pianoroll::PITCHES;

/// Positions the sampler must keep silent plus per-column rhythm requirements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintMask {
    length: usize,
    pitches: usize,
    out_of_key: Vec<bool>,
    rhythm: Vec<RhythmConstraint>,
    rhythm_in_key_only: bool,
}

#[derive(Clone, Debug)]
pub struct MaskOptions {
    pub pitches: usize,
    /// Extra pitch classes accepted as in-key for specific keys.
    pub allowlist: BTreeMap<KeySignature, PitchClassSet>,
    /// Restrict rhythm-forced onsets to in-key pitches.
    pub rhythm_in_key_only: bool,
}

impl Default for MaskOptions {
    fn default() -> Self {
        Self { pitches: PITCHES, allowlist: BTreeMap::new(), rhythm_in_key_only: true }
    }
}

impl ConstraintMask {
    /// A mask with no harmonic positions and no rhythm requirements.
    pub fn empty(length: usize, pitches: usize) -> Self {
        Self {
            length,
            pitches,
            out_of_key: vec![false; length * pitches],
            rhythm: vec![RhythmConstraint::Unconstrained; length],
            rhythm_in_key_only: false,
        }
    }

    /// Builds a mask from an explicit `length × pitches` out-of-key grid.
    pub fn from_grid(
        length: usize,
        pitches: usize,
        out_of_key: Vec<bool>,
        rhythm: Vec<RhythmConstraint>,
        rhythm_in_key_only: bool,
    ) -> Result<Self> {
        if out_of_key.len() != length * pitches {
            return Err(FtgError::LengthMismatch { expected: length * pitches, got: out_of_key.len() });
        }
        if rhythm.len() != length {
            return Err(FtgError::LengthMismatch { expected: length, got: rhythm.len() });
        }
        for r in &rhythm {
            r.validate()?;
        }
        Ok(Self { length, pitches, out_of_key, rhythm, rhythm_in_key_only })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn pitches(&self) -> usize {
        self.pitches
    }

    #[inline]
    pub fn is_out_of_key(&self, step: usize, pitch: usize) -> bool {
        self.out_of_key[step * self.pitches + pitch]
    }

    pub fn rhythm_at(&self, step: usize) -> RhythmConstraint {
        self.rhythm[step]
    }

    pub fn rhythm(&self) -> &[RhythmConstraint] {
        &self.rhythm
    }

    pub fn rhythm_in_key_only(&self) -> bool {
        self.rhythm_in_key_only
    }

    pub fn has_harmonic(&self) -> bool {
        self.out_of_key.iter().any(|&b| b)
    }

    pub fn has_rhythm(&self) -> bool {
        self.rhythm.iter().any(|r| *r != RhythmConstraint::Unconstrained)
    }

    pub fn out_of_key_count(&self) -> usize {
        self.out_of_key.iter().filter(|&&b| b).count()
    }

    /// Same harmonic grid with different rhythm requirements.
    pub fn with_rhythm(&self, rhythm: Vec<RhythmConstraint>) -> Result<Self> {
        Self::from_grid(self.length, self.pitches, self.out_of_key.clone(), rhythm, self.rhythm_in_key_only)
    }

    pub(crate) fn check_dims(&self, length: usize, pitches: usize) -> Result<()> {
        if self.length != length {
            return Err(FtgError::LengthMismatch { expected: length, got: self.length });
        }
        if self.pitches != pitches {
            return Err(FtgError::LengthMismatch { expected: pitches, got: self.pitches });
        }
        Ok(())
    }
}

/// Marks `(l, h)` whenever `h`'s pitch class is outside the key at `l`, and
/// copies the rhythm requirement of each column.
pub fn build_constraint_mask(
    keys: &KeySequence,
    rhythm_ctrl: &[RhythmConstraint],
    opts: &MaskOptions,
) -> Result<ConstraintMask> {
    if keys.len() != rhythm_ctrl.len() {
        return Err(FtgError::LengthMismatch { expected: keys.len(), got: rhythm_ctrl.len() });
    }
    let length = keys.len();
    let mut grid = vec![false; length * opts.pitches];
    for l in 0..length {
        let key = keys.at(l);
        let mut out = out_of_key_pitch_classes(key);
        if let Some(extra) = opts.allowlist.get(&key) {
            out = out.difference(*extra);
        }
        for h in 0..opts.pitches {
            grid[l * opts.pitches + h] = out.contains_pitch(h);
        }
    }
    ConstraintMask::from_grid(length, opts.pitches, grid, rhythm_ctrl.to_vec(), opts.rhythm_in_key_only)
}
