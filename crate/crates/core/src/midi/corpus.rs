//! Seeded synthetic corpus of melody/accompaniment pieces.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FtgError, Result};
use crate::metrics::STEPS_PER_BAR;
use crate::pianoroll::{Note, PianoRoll, PITCHES};
use crate::theory::{Chord, ChordProgression, ChordQuality, KeySequence, KeySignature, Mode, RhythmPattern};

const MAJOR_SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const NATURAL_MINOR_SCALE: [u8; 7] = [0, 2, 3, 5, 7, 8, 10];
const BASS_OCTAVE: usize = 48;
const CHORD_OCTAVE: usize = 60;
const MELODY_LOW: usize = 67;
const MELODY_HIGH: usize = 86;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub pieces: usize,
    pub measures: usize,
    pub keys: Vec<KeySignature>,
    /// Roman-numeral progressions, one numeral per measure, cycled to fill the piece.
    pub progressions: Vec<Vec<String>>,
    /// Accompaniment onset steps within one measure.
    pub rhythms: Vec<Vec<usize>>,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        let progs: [&[&str]; 6] = [
            &["I", "IV", "V", "I"],
            &["I", "vi", "IV", "V"],
            &["vi", "IV", "I", "V"],
            &["I", "V", "vi", "IV"],
            &["ii", "V7", "I", "I"],
            &["I", "iii", "IV", "V7"],
        ];
        Self {
            pieces: 64,
            measures: 4,
            keys: (0..12).map(KeySignature::major).collect(),
            progressions: progs.iter().map(|p| p.iter().map(|s| s.to_string()).collect()).collect(),
            rhythms: vec![vec![0, 4, 8, 12], vec![0, 6, 8, 14], vec![0, 8], vec![0, 2, 4, 6, 8, 10, 12, 14], vec![
                0, 3, 6, 8, 11, 14,
            ]],
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FtgError::InvalidInput(m.to_string()));
        if self.pieces == 0 || self.measures == 0 {
            return bad("piece and measure counts must be positive");
        }
        if self.keys.is_empty() || self.progressions.is_empty() || self.rhythms.is_empty() {
            return bad("key, progression and rhythm pools must be nonempty");
        }
        for r in &self.rhythms {
            if r.is_empty() || r.iter().any(|&s| s >= STEPS_PER_BAR) {
                return bad("rhythm templates need onsets inside one measure");
            }
            if !r.contains(&0) {
                return bad("rhythm templates must start on the downbeat");
            }
        }
        for prog in &self.progressions {
            if prog.is_empty() {
                return bad("empty progression template");
            }
            for key in &self.keys {
                for numeral in prog {
                    let chord = roman_chord(numeral, *key)?;
                    if !chord.pitch_classes().difference(key.in_key()).is_empty() {
                        return Err(FtgError::InvalidInput(format!("{numeral} leaves the key of {key}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Chord for a roman numeral in `key`. Upper case is major, lower case minor;
/// suffixes `o` (diminished), `+` (augmented), `7` (dominant on upper case,
/// minor seventh on lower case) and `maj7`.
pub fn roman_chord(numeral: &str, key: KeySignature) -> Result<Chord> {
    let s = numeral.trim();
    let split = s.find(|c: char| !matches!(c.to_ascii_uppercase(), 'I' | 'V')).unwrap_or(s.len());
    let (head, suffix) = s.split_at(split);
    let degree = ["I", "II", "III", "IV", "V", "VI", "VII"]
        .iter()
        .position(|d| d.eq_ignore_ascii_case(head))
        .ok_or_else(|| FtgError::InvalidInput(format!("bad roman numeral {numeral:?}")))?;
    let upper = head.chars().all(|c| c.is_ascii_uppercase());
    if !upper && head.chars().any(|c| c.is_ascii_uppercase()) {
        return Err(FtgError::InvalidInput(format!("mixed case in roman numeral {numeral:?}")));
    }
    let quality = match (suffix, upper) {
        ("", true) => ChordQuality::Major,
        ("", false) => ChordQuality::Minor,
        ("o", _) => ChordQuality::Diminished,
        ("+", _) => ChordQuality::Augmented,
        ("7", true) => ChordQuality::Dominant7,
        ("7", false) => ChordQuality::Minor7,
        ("maj7", true) => ChordQuality::Major7,
        _ => return Err(FtgError::InvalidInput(format!("bad roman numeral suffix in {numeral:?}"))),
    };
    let scale = match key.mode() {
        Mode::Major => MAJOR_SCALE,
        Mode::Minor => NATURAL_MINOR_SCALE,
    };
    Chord::new((key.tonic() + scale[degree]) % 12, quality)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusPiece {
    pub key: KeySignature,
    pub progression: usize,
    pub rhythm_template: usize,
    pub chords: ChordProgression,
    /// Accompaniment onset steps.
    pub rhythm: RhythmPattern,
    pub keys: KeySequence,
    pub melody: PianoRoll,
    pub accompaniment: PianoRoll,
}

/// Manifest entry describing one generated piece.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceMeta {
    pub index: usize,
    pub file: String,
    pub key: KeySignature,
    pub progression: Vec<String>,
    pub chords: Vec<String>,
    pub rhythm: Vec<usize>,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub spec: CorpusSpec,
    pub pieces: Vec<PieceMeta>,
}

impl CorpusManifest {
    pub fn new(spec: &CorpusSpec, pieces: &[CorpusPiece]) -> Self {
        let pieces = pieces
            .iter()
            .enumerate()
            .map(|(index, p)| PieceMeta {
                index,
                file: piece_file_name(index),
                key: p.key,
                progression: spec.progressions[p.progression].clone(),
                chords: (0..spec.measures)
                    .map(|m| p.chords.at(m * STEPS_PER_BAR).map_or_else(|| "N".into(), |c| c.to_string()))
                    .collect(),
                rhythm: spec.rhythms[p.rhythm_template].clone(),
                length: p.melody.length(),
            })
            .collect();
        Self { spec: spec.clone(), pieces }
    }
}

pub fn piece_file_name(index: usize) -> String {
    format!("piece_{index:04}.mid")
}

fn scale_pitches(key: KeySignature) -> Vec<usize> {
    let pcs = key.in_key();
    (MELODY_LOW..=MELODY_HIGH).filter(|&p| pcs.contains_pitch(p)).collect()
}

/// Generates `spec.pieces` pieces. Each piece draws a key, a progression and a
/// rhythm template; the accompaniment holds the chord root in the bass for the
/// measure and strikes the chord tones on each template onset, and the melody
/// walks the scale in quarters and eighths starting from a chord tone.
pub fn synth_corpus(spec: &CorpusSpec) -> Result<Vec<CorpusPiece>> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let length = spec.measures * STEPS_PER_BAR;
    let mut pieces = Vec::with_capacity(spec.pieces);
    for _ in 0..spec.pieces {
        let key = *spec.keys.choose(&mut rng).expect("nonempty pool");
        let progression = rng.random_range(0..spec.progressions.len());
        let rhythm_template = rng.random_range(0..spec.rhythms.len());
        let template = &spec.progressions[progression];
        let onsets = &spec.rhythms[rhythm_template];

        let mut chords = Vec::with_capacity(spec.measures);
        for m in 0..spec.measures {
            chords.push(roman_chord(&template[m % template.len()], key)?);
        }

        let mut acc = Vec::new();
        let mut rhythm_steps = Vec::new();
        for (m, chord) in chords.iter().enumerate() {
            let bar = m * STEPS_PER_BAR;
            acc.push(Note { start: bar, duration: STEPS_PER_BAR, pitch: BASS_OCTAVE + chord.root() as usize });
            for (i, &on) in onsets.iter().enumerate() {
                let next = onsets.get(i + 1).copied().unwrap_or(STEPS_PER_BAR);
                rhythm_steps.push(bar + on);
                for pc in chord.pitch_classes().iter() {
                    acc.push(Note { start: bar + on, duration: next - on, pitch: CHORD_OCTAVE + pc as usize });
                }
            }
        }

        let scale = scale_pitches(key);
        let first_tones = chords[0].pitch_classes();
        let mut idx = (0..scale.len())
            .filter(|&i| first_tones.contains_pitch(scale[i]))
            .min_by_key(|&i| scale[i].abs_diff(72 + key.tonic() as usize))
            .unwrap_or(scale.len() / 2);
        let mut mel = Vec::new();
        let mut step = 0;
        while step < length {
            let dur = if rng.random_bool(0.25) { 2 } else { 4 };
            mel.push(Note { start: step, duration: dur, pitch: scale[idx] });
            let delta: i64 = *[-2, -1, -1, 0, 1, 1, 2].choose(&mut rng).expect("nonempty");
            idx = (idx as i64 + delta).clamp(0, scale.len() as i64 - 1) as usize;
            step += dur;
        }

        pieces.push(CorpusPiece {
            key,
            progression,
            rhythm_template,
            chords: ChordProgression::from_spans(&chords, STEPS_PER_BAR),
            rhythm: RhythmPattern::new(length, rhythm_steps)?,
            keys: KeySequence::constant(key, length),
            melody: PianoRoll::from_notes(length, PITCHES, &mel)?,
            accompaniment: PianoRoll::from_notes(length, PITCHES, &acc)?,
        });
    }
    Ok(pieces)
}
