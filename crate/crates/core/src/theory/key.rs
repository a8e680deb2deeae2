use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::chord::ChordProgression;
use super::pitch::{parse_pitch_class, pitch_class_name, PitchClassSet};
use crate::error::{FtgError, Result};

const MAJOR_SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const NATURAL_MINOR_SCALE: [u8; 7] = [0, 2, 3, 5, 7, 8, 10];
const LEADING_TONE: u8 = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Major,
    Minor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeySignature {
    tonic: u8,
    mode: Mode,
}

impl KeySignature {
    pub fn new(tonic: u8, mode: Mode) -> Result<Self> {
        if tonic >= 12 {
            return Err(FtgError::InvalidInput(format!("tonic {tonic} out of range")));
        }
        Ok(Self { tonic, mode })
    }

    pub fn major(tonic: u8) -> Self {
        Self { tonic: tonic % 12, mode: Mode::Major }
    }

    pub fn minor(tonic: u8) -> Self {
        Self { tonic: tonic % 12, mode: Mode::Minor }
    }

    pub fn tonic(self) -> u8 {
        self.tonic
    }

    pub fn mode(self) -> Mode {
        self.mode
    }

    /// Pitch classes treated as in key. Minor keys use the natural minor scale
    /// plus the harmonic-minor leading tone.
    pub fn in_key(self) -> PitchClassSet {
        match self.mode {
            Mode::Major => PitchClassSet::from_intervals(self.tonic, &MAJOR_SCALE),
            Mode::Minor => {
                let mut set = PitchClassSet::from_intervals(self.tonic, &NATURAL_MINOR_SCALE);
                set.insert((self.tonic + LEADING_TONE) % 12);
                set
            }
        }
    }

    pub fn transpose(self, semitones: i32) -> Self {
        Self { tonic: ((self.tonic as i32 + semitones).rem_euclid(12)) as u8, mode: self.mode }
    }

    /// Position on the circle of fifths; minor keys sit with their relative major.
    pub fn fifths_position(self) -> u8 {
        let major_tonic = match self.mode {
            Mode::Major => self.tonic,
            Mode::Minor => (self.tonic + 3) % 12,
        };
        (major_tonic * 7) % 12
    }

    pub fn fifths_distance(self, other: KeySignature) -> u8 {
        let d = (self.fifths_position() as i32 - other.fifths_position() as i32).rem_euclid(12) as u8;
        d.min(12 - d)
    }

    /// All 24 major and minor keys.
    pub fn all() -> impl Iterator<Item = KeySignature> {
        (0..12u8).flat_map(|t| [KeySignature::major(t), KeySignature::minor(t)])
    }
}

/// Complement of the key's in-key set within the twelve pitch classes.
pub fn out_of_key_pitch_classes(key: KeySignature) -> PitchClassSet {
    key.in_key().complement()
}

impl fmt::Display for KeySignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = if self.mode == Mode::Minor { "m" } else { "" };
        write!(f, "{}{suffix}", pitch_class_name(self.tonic))
    }
}

impl FromStr for KeySignature {
    type Err = FtgError;

    fn from_str(s: &str) -> Result<Self> {
        let (tonic, rest) = parse_pitch_class(s.trim())?;
        let mode = match rest {
            "" | "maj" | "major" => Mode::Major,
            "m" | "min" | "minor" => Mode::Minor,
            _ => return Err(FtgError::InvalidInput(format!("bad key symbol {s:?}"))),
        };
        KeySignature::new(tonic, mode)
    }
}

impl Serialize for KeySignature {
    fn serialize<Ser: serde::Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KeySignature {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-step key assignment.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeySequence {
    keys: Vec<KeySignature>,
}

impl KeySequence {
    pub fn new(keys: Vec<KeySignature>) -> Self {
        Self { keys }
    }

    pub fn constant(key: KeySignature, length: usize) -> Self {
        Self { keys: vec![key; length] }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn at(&self, step: usize) -> KeySignature {
        self.keys[step]
    }

    pub fn keys(&self) -> &[KeySignature] {
        &self.keys
    }

    pub fn transpose(&self, semitones: i32) -> Self {
        Self { keys: self.keys.iter().map(|k| k.transpose(semitones)).collect() }
    }
}

/// One measure of 16th-note steps.
pub const DEFAULT_KEY_WINDOW: usize = 16;

/// Windowed key estimate from chord tones.
///
/// Each step takes the key whose in-key set covers the most chord-tone mass in
/// a window of `window` steps centered on it. Ties go to the key closest on the
/// circle of fifths to the previous step's key, then the lower tonic, then major.
pub fn derive_keys_from_chords(chords: &ChordProgression, window: usize) -> KeySequence {
    let length = chords.len();
    let window = window.max(1);
    let mut keys: Vec<KeySignature> = Vec::with_capacity(length);
    for l in 0..length {
        let start = l.saturating_sub(window / 2);
        let end = (start + window).min(length);
        let mut tone_mass = [0usize; 12];
        for s in start..end {
            for pc in chords.pitch_classes_at(s).iter() {
                tone_mass[pc as usize] += 1;
            }
        }
        let prev = keys.last().copied();
        let best = KeySignature::all()
            .min_by_key(|&k| {
                let in_key = k.in_key();
                let score: usize = (0..12u8).filter(|&pc| in_key.contains(pc)).map(|pc| tone_mass[pc as usize]).sum();
                let dist = prev.map_or(0, |p| k.fifths_distance(p));
                (Reverse(score), dist, k.tonic, k.mode)
            })
            .expect("24 candidate keys");
        keys.push(best);
    }
    KeySequence { keys }
}
