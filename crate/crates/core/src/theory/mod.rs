//! Keys, chords, rhythms and the constraint masks built from them.

mod chord;
mod key;
mod mask;
mod pitch;
mod recognize;
mod rhythm;

pub use chord::{chord_pitch_classes, parse_optional_chord, Chord, ChordChange, ChordProgression, ChordQuality};
pub use key::{derive_keys_from_chords, out_of_key_pitch_classes, KeySequence, KeySignature, Mode, DEFAULT_KEY_WINDOW};
pub use mask::{build_constraint_mask, ConstraintMask, MaskOptions};
pub use pitch::{parse_pitch_class, pitch_class_name, PitchClassSet};
pub use recognize::{best_chord, chroma, recognize_chords, template_score, MISSING_TONE_PENALTY, NON_CHORD_PENALTY};
pub use rhythm::{parse_rhythm_pattern, strict_constraints, RhythmConstraint, RhythmPattern};
