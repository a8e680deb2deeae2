use super::chord::{Chord, ChordProgression, ChordQuality};
use crate::error::{FtgError, Result};
use crate::pianoroll::PianoRoll;

/// Weight on sounding mass outside the template.
pub const NON_CHORD_PENALTY: f64 = 0.5;
/// Weight per template tone that never sounds in the window.
pub const MISSING_TONE_PENALTY: f64 = 0.1;
const TIE_EPS: f64 = 1e-12;

/// Duration-weighted pitch-class histogram of `roll` over `[start, end)`,
/// counting every active cell (onset or sustain). Not normalized.
pub fn chroma(roll: &PianoRoll, start: usize, end: usize) -> [f64; 12] {
    let mut mass = [0.0; 12];
    for l in start..end.min(roll.length()) {
        for h in 0..roll.pitches() {
            if roll.get(0, l, h) || roll.get(1, l, h) {
                mass[h % 12] += 1.0;
            }
        }
    }
    mass
}

/// Template score of `chord` against a normalized chroma vector.
pub fn template_score(chord: Chord, chroma: &[f64; 12]) -> f64 {
    let tones = chord.pitch_classes();
    let mut matched = 0.0;
    let mut missing = 0usize;
    for pc in 0..12u8 {
        if tones.contains(pc) {
            matched += chroma[pc as usize];
            if chroma[pc as usize] <= 0.0 {
                missing += 1;
            }
        }
    }
    let total: f64 = chroma.iter().sum();
    matched - NON_CHORD_PENALTY * (total - matched) - MISSING_TONE_PENALTY * missing as f64
}

/// Best template for a chroma vector, or `None` when it carries no mass.
pub fn best_chord(chroma: &[f64; 12]) -> Option<Chord> {
    let total: f64 = chroma.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let normalized = chroma.map(|m| m / total);
    let mut best: Option<(Chord, f64)> = None;
    // quality outer loop then root so the first strict winner respects priority order
    for quality in ChordQuality::ALL {
        for root in 0..12u8 {
            let chord = Chord::new(root, quality).expect("root < 12");
            let score = template_score(chord, &normalized);
            if best.is_none_or(|(_, s)| score > s + TIE_EPS) {
                best = Some((chord, score));
            }
        }
    }
    best.map(|(c, _)| c)
}

/// Template-matching chord recognizer over windows of `granularity` steps.
///
/// A window with no sounding notes repeats the previous window's chord; a
/// silent first window defaults to C major.
pub fn recognize_chords(roll: &PianoRoll, granularity: usize) -> Result<ChordProgression> {
    let length = roll.length();
    if granularity == 0 || !length.is_multiple_of(granularity) {
        return Err(FtgError::InvalidInput(format!("granularity {granularity} does not divide length {length}")));
    }
    let mut steps = Vec::with_capacity(length);
    let mut prev = Chord::new(0, ChordQuality::Major)?;
    for start in (0..length).step_by(granularity) {
        let chord = best_chord(&chroma(roll, start, start + granularity)).unwrap_or(prev);
        steps.extend(std::iter::repeat_n(Some(chord), granularity));
        prev = chord;
    }
    Ok(ChordProgression::from_steps(steps))
}
