use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pitch::{parse_pitch_class, pitch_class_name, PitchClassSet};
use crate::error::{FtgError, Result};

/// Chord vocabulary. Declaration order is the recognizer's tie-break priority.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChordQuality {
    Major,
    Minor,
    Dominant7,
    Minor7,
    Major7,
    Diminished,
    Augmented,
}

impl ChordQuality {
    pub const ALL: [ChordQuality; 7] = [
        ChordQuality::Major,
        ChordQuality::Minor,
        ChordQuality::Dominant7,
        ChordQuality::Minor7,
        ChordQuality::Major7,
        ChordQuality::Diminished,
        ChordQuality::Augmented,
    ];

    /// Semitone offsets from the root.
    pub fn intervals(self) -> &'static [u8] {
        match self {
            ChordQuality::Major => &[0, 4, 7],
            ChordQuality::Minor => &[0, 3, 7],
            ChordQuality::Diminished => &[0, 3, 6],
            ChordQuality::Augmented => &[0, 4, 8],
            ChordQuality::Dominant7 => &[0, 4, 7, 10],
            ChordQuality::Major7 => &[0, 4, 7, 11],
            ChordQuality::Minor7 => &[0, 3, 7, 10],
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            ChordQuality::Major => "",
            ChordQuality::Minor => "m",
            ChordQuality::Diminished => "dim",
            ChordQuality::Augmented => "aug",
            ChordQuality::Dominant7 => "7",
            ChordQuality::Major7 => "maj7",
            ChordQuality::Minor7 => "m7",
        }
    }

    fn from_suffix(s: &str) -> Option<Self> {
        Some(match s {
            "" | "maj" | "M" => ChordQuality::Major,
            "m" | "min" | "-" => ChordQuality::Minor,
            "dim" | "o" | "°" => ChordQuality::Diminished,
            "aug" | "+" => ChordQuality::Augmented,
            "7" | "dom7" => ChordQuality::Dominant7,
            "maj7" | "M7" | "Δ" | "Δ7" => ChordQuality::Major7,
            "m7" | "min7" | "-7" => ChordQuality::Minor7,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Chord {
    root: u8,
    quality: ChordQuality,
}

impl Chord {
    pub fn new(root: u8, quality: ChordQuality) -> Result<Self> {
        if root >= 12 {
            return Err(FtgError::InvalidInput(format!("chord root {root} out of range")));
        }
        Ok(Self { root, quality })
    }

    pub fn root(self) -> u8 {
        self.root
    }

    pub fn quality(self) -> ChordQuality {
        self.quality
    }

    pub fn pitch_classes(self) -> PitchClassSet {
        chord_pitch_classes(&self)
    }

    pub fn transpose(self, semitones: i32) -> Self {
        Self { root: ((self.root as i32 + semitones).rem_euclid(12)) as u8, quality: self.quality }
    }
}

/// Template expansion of a chord into its pitch classes.
pub fn chord_pitch_classes(chord: &Chord) -> PitchClassSet {
    PitchClassSet::from_intervals(chord.root, chord.quality.intervals())
}

impl fmt::Display for Chord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", pitch_class_name(self.root), self.quality.suffix())
    }
}

impl FromStr for Chord {
    type Err = FtgError;

    fn from_str(s: &str) -> Result<Self> {
        let (root, rest) = parse_pitch_class(s.trim())?;
        let quality = ChordQuality::from_suffix(rest)
            .ok_or_else(|| FtgError::InvalidInput(format!("unknown chord quality in {s:?}")))?;
        Chord::new(root, quality)
    }
}

impl Serialize for Chord {
    fn serialize<Ser: serde::Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Chord {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a chord symbol where `N`, `NC` or `N.C.` mean "no chord".
pub fn parse_optional_chord(symbol: &str) -> Result<Option<Chord>> {
    match symbol.trim() {
        "N" | "NC" | "N.C." => Ok(None),
        s => s.parse().map(Some),
    }
}

fn optional_chord_symbol(chord: Option<Chord>) -> String {
    chord.map_or_else(|| "N".to_string(), |c| c.to_string())
}

/// Per-step chord assignment. `None` marks a step with no chord.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChordProgression {
    steps: Vec<Option<Chord>>,
}

/// JSON change-point entry: `{"step":0,"chord":"C"}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChordChange {
    pub step: usize,
    pub chord: String,
}

impl ChordProgression {
    pub fn from_steps(steps: Vec<Option<Chord>>) -> Self {
        Self { steps }
    }

    /// Repeats each chord for `span` steps.
    pub fn from_spans(chords: &[Chord], span: usize) -> Self {
        Self { steps: chords.iter().flat_map(|&c| std::iter::repeat_n(Some(c), span)).collect() }
    }

    /// Expands chord symbols that each cover `span` steps.
    pub fn from_symbols<S: AsRef<str>>(symbols: &[S], span: usize) -> Result<Self> {
        let mut steps = Vec::with_capacity(symbols.len() * span);
        for s in symbols {
            let chord = parse_optional_chord(s.as_ref())?;
            steps.extend(std::iter::repeat_n(chord, span));
        }
        Ok(Self { steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn at(&self, step: usize) -> Option<Chord> {
        self.steps.get(step).copied().flatten()
    }

    pub fn steps(&self) -> &[Option<Chord>] {
        &self.steps
    }

    /// Chord tones at `step`; empty when there is no chord.
    pub fn pitch_classes_at(&self, step: usize) -> PitchClassSet {
        self.at(step).map_or(PitchClassSet::EMPTY, |c| c.pitch_classes())
    }

    pub fn transpose(&self, semitones: i32) -> Self {
        Self { steps: self.steps.iter().map(|c| c.map(|c| c.transpose(semitones))).collect() }
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        let end = (start + len).min(self.steps.len());
        Self { steps: self.steps[start.min(end)..end].to_vec() }
    }

    /// Run-length change points.
    pub fn to_changes(&self) -> Vec<ChordChange> {
        let mut out: Vec<ChordChange> = Vec::new();
        let mut prev: Option<Option<Chord>> = None;
        for (step, &c) in self.steps.iter().enumerate() {
            if prev != Some(c) {
                out.push(ChordChange { step, chord: optional_chord_symbol(c) });
                prev = Some(c);
            }
        }
        out
    }

    /// Rebuilds a progression of `length` steps from change points. Steps before
    /// the first change carry no chord.
    pub fn from_changes(changes: &[ChordChange], length: usize) -> Result<Self> {
        let mut steps = vec![None; length];
        let mut sorted: Vec<&ChordChange> = changes.iter().collect();
        sorted.sort_by_key(|c| c.step);
        for (i, change) in sorted.iter().enumerate() {
            if change.step >= length {
                return Err(FtgError::InvalidInput(format!("chord change at step {} beyond length", change.step)));
            }
            let end = sorted.get(i + 1).map_or(length, |n| n.step.min(length));
            let chord = parse_optional_chord(&change.chord)?;
            steps[change.step..end].fill(chord);
        }
        Ok(Self { steps })
    }
}

impl Serialize for ChordProgression {
    fn serialize<Ser: serde::Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        self.to_changes().serialize(serializer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_major_template() {
        let c: Chord = "C".parse().unwrap();
        assert_eq!(chord_pitch_classes(&c), [0, 4, 7].into_iter().collect());
    }

    #[test]
    fn a_minor_template() {
        let am: Chord = "Am".parse().unwrap();
        assert_eq!(am.pitch_classes(), [9, 0, 4].into_iter().collect());
    }

    #[test]
    fn diminished_template_any_root() {
        for r in 0..12u8 {
            let c = Chord::new(r, ChordQuality::Diminished).unwrap();
            assert_eq!(c.pitch_classes(), [r, (r + 3) % 12, (r + 6) % 12].into_iter().collect());
        }
    }

    #[test]
    fn symbols_round_trip() {
        for s in ["C", "Am", "G7", "F#dim", "Bbmaj7", "Em7", "Caug"] {
            let c: Chord = s.parse().unwrap();
            let again: Chord = c.to_string().parse().unwrap();
            assert_eq!(c, again, "{s}");
        }
        assert_eq!("Bbmaj7".parse::<Chord>().unwrap().to_string(), "A#maj7");
        assert!("Cxyz".parse::<Chord>().is_err());
    }

    #[test]
    fn templates_transpose() {
        for q in ChordQuality::ALL {
            let base = Chord::new(0, q).unwrap().pitch_classes();
            for s in 0..12 {
                assert_eq!(Chord::new(s as u8, q).unwrap().pitch_classes(), base.transpose(s));
            }
        }
    }

    #[test]
    fn change_points_round_trip() {
        let prog = ChordProgression::from_symbols(&["C", "C", "N", "G7"], 4).unwrap();
        let changes = prog.to_changes();
        assert_eq!(
            serde_json::to_string(&changes).unwrap(),
            r#"[{"step":0,"chord":"C"},{"step":8,"chord":"N"},{"step":12,"chord":"G7"}]"#
        );
        assert_eq!(ChordProgression::from_changes(&changes, 16).unwrap(), prog);
    }
}
