use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FtgError, Result};

const SHARP_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

/// Name of a pitch class using sharps.
pub fn pitch_class_name(pc: u8) -> &'static str {
    SHARP_NAMES[(pc % 12) as usize]
}

/// Parses a leading note name (`C`, `F#`, `Bb`, `E♭`) and returns the pitch
/// class with the unparsed remainder.
pub fn parse_pitch_class(text: &str) -> Result<(u8, &str)> {
    let mut chars = text.char_indices();
    let (_, letter) = chars.next().ok_or_else(|| FtgError::InvalidInput("empty note name".into()))?;
    let base: i32 = match letter.to_ascii_uppercase() {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return Err(FtgError::InvalidInput(format!("bad note name {text:?}"))),
    };
    let mut rest = &text[letter.len_utf8()..];
    let mut shift = 0;
    if let Some(c) = rest.chars().next() {
        match c {
            '#' | '♯' => shift = 1,
            'b' | '♭' => shift = -1,
            _ => {}
        }
        if shift != 0 {
            rest = &rest[c.len_utf8()..];
        }
    }
    Ok(((base + shift).rem_euclid(12) as u8, rest))
}

/// Set of pitch classes stored as a 12-bit mask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "Vec<u8>", try_from = "Vec<u8>")]
pub struct PitchClassSet(u16);

impl PitchClassSet {
    pub const EMPTY: Self = Self(0);
    pub const ALL: Self = Self(0x0fff);

    pub fn from_intervals(root: u8, intervals: &[u8]) -> Self {
        intervals.iter().map(|i| (root + i) % 12).collect()
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    #[inline]
    pub fn contains(self, pc: u8) -> bool {
        pc < 12 && self.0 & (1 << pc) != 0
    }

    /// Membership of a MIDI pitch through its pitch class, across all octaves.
    #[inline]
    pub fn contains_pitch(self, pitch: usize) -> bool {
        self.0 & (1 << (pitch % 12)) != 0
    }

    pub fn insert(&mut self, pc: u8) {
        self.0 |= 1 << (pc % 12);
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn complement(self) -> Self {
        Self(!self.0 & Self::ALL.0)
    }

    pub fn union(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        Self(self.0 & other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        Self(self.0 & !other.0)
    }

    /// Rotates every member up by `semitones` (mod 12).
    pub fn transpose(self, semitones: i32) -> Self {
        self.iter().map(|pc| ((pc as i32 + semitones).rem_euclid(12)) as u8).collect()
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0..12u8).filter(move |&pc| self.contains(pc))
    }
}

impl FromIterator<u8> for PitchClassSet {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        let mut set = Self::EMPTY;
        for pc in iter {
            set.insert(pc);
        }
        set
    }
}

impl From<PitchClassSet> for Vec<u8> {
    fn from(set: PitchClassSet) -> Self {
        set.iter().collect()
    }
}

impl TryFrom<Vec<u8>> for PitchClassSet {
    type Error = FtgError;

    fn try_from(v: Vec<u8>) -> Result<Self> {
        if let Some(bad) = v.iter().find(|&&pc| pc >= 12) {
            return Err(FtgError::InvalidInput(format!("pitch class {bad} out of range")));
        }
        Ok(v.into_iter().collect())
    }
}

impl fmt::Debug for PitchClassSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
