use serde::{Deserialize, Serialize};

use crate::error::{FtgError, Result};
use crate::pianoroll::PianoRoll;

/// Set of onset steps within `[0, length)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RhythmPattern {
    length: usize,
    onsets: Vec<usize>,
}

impl RhythmPattern {
    pub fn new(length: usize, onsets: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut onsets: Vec<usize> = onsets.into_iter().collect();
        if let Some(&bad) = onsets.iter().find(|&&l| l >= length) {
            return Err(FtgError::InvalidInput(format!("onset step {bad} outside [0, {length})")));
        }
        onsets.sort_unstable();
        onsets.dedup();
        Ok(Self { length, onsets })
    }

    /// Steps of `roll` carrying at least one onset.
    pub fn from_roll(roll: &PianoRoll) -> Self {
        let onsets = (0..roll.length()).filter(|&l| roll.onsets_at(l).next().is_some()).collect();
        Self { length: roll.length(), onsets }
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn onsets(&self) -> &[usize] {
        &self.onsets
    }

    pub fn contains(&self, step: usize) -> bool {
        self.onsets.binary_search(&step).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.onsets.is_empty()
    }
}

/// Per-column onset requirement on the onset channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "n", rename_all = "snake_case")]
pub enum RhythmConstraint {
    #[default]
    Unconstrained,
    /// Exactly `n` onsets.
    Exactly(usize),
    /// At least `n` onsets.
    AtLeast(usize),
    /// No onsets.
    NoneAllowed,
}

impl RhythmConstraint {
    pub fn validate(self) -> Result<Self> {
        match self {
            RhythmConstraint::Exactly(0) | RhythmConstraint::AtLeast(0) => {
                Err(FtgError::InvalidInput("rhythm constraint needs N >= 1".into()))
            }
            c => Ok(c),
        }
    }

    /// Whether `onsets` onsets in a column satisfy the constraint.
    pub fn is_satisfied_by(self, onsets: usize) -> bool {
        match self {
            RhythmConstraint::Unconstrained => true,
            RhythmConstraint::Exactly(n) => onsets == n,
            RhythmConstraint::AtLeast(n) => onsets >= n,
            RhythmConstraint::NoneAllowed => onsets == 0,
        }
    }
}

/// Parses a rhythm pattern string, one character per 16th step:
/// `x` requires an onset (at least one), a digit `1`-`9` requires exactly that
/// many, `o` forbids onsets and `.` leaves the step free. Spaces and `|` are
/// ignored so bars can be separated visually.
///
/// Returns the onset set (the `x` and digit steps) with the per-step constraints.
pub fn parse_rhythm_pattern(pattern: &str) -> Result<(RhythmPattern, Vec<RhythmConstraint>)> {
    let mut specs = Vec::new();
    let mut onsets = Vec::new();
    for ch in pattern.chars().filter(|c| !c.is_whitespace() && *c != '|') {
        let step = specs.len();
        let spec = match ch {
            'x' | 'X' => RhythmConstraint::AtLeast(1),
            'o' | 'O' => RhythmConstraint::NoneAllowed,
            '.' | '-' => RhythmConstraint::Unconstrained,
            '1'..='9' => RhythmConstraint::Exactly(ch as usize - '0' as usize),
            other => {
                return Err(FtgError::InvalidInput(format!("bad rhythm character {other:?} at step {step}")))
            }
        };
        if matches!(spec, RhythmConstraint::AtLeast(_) | RhythmConstraint::Exactly(_)) {
            onsets.push(step);
        }
        specs.push(spec);
    }
    let rhythm = RhythmPattern::new(specs.len(), onsets)?;
    Ok((rhythm, specs))
}

/// Onset-required / onset-forbidden constraints matching a rhythm exactly.
pub fn strict_constraints(rhythm: &RhythmPattern) -> Vec<RhythmConstraint> {
    (0..rhythm.length())
        .map(|l| if rhythm.contains(l) { RhythmConstraint::AtLeast(1) } else { RhythmConstraint::NoneAllowed })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_syntax() {
        let (rhythm, specs) = parse_rhythm_pattern("x..o|2...").unwrap();
        assert_eq!(rhythm.length(), 8);
        assert_eq!(rhythm.onsets(), &[0, 4]);
        assert_eq!(specs[0], RhythmConstraint::AtLeast(1));
        assert_eq!(specs[3], RhythmConstraint::NoneAllowed);
        assert_eq!(specs[4], RhythmConstraint::Exactly(2));
        assert!(parse_rhythm_pattern("x?").is_err());
    }

    #[test]
    fn zero_n_is_invalid() {
        assert!(RhythmConstraint::AtLeast(0).validate().is_err());
        assert!(RhythmConstraint::Exactly(2).validate().is_ok());
    }

    #[test]
    fn bounds_are_checked() {
        assert!(RhythmPattern::new(4, [4]).is_err());
        assert_eq!(RhythmPattern::new(4, [3, 1, 3]).unwrap().onsets(), &[1, 3]);
    }

    #[test]
    fn constraint_serde_shape() {
        let json = serde_json::to_string(&[RhythmConstraint::AtLeast(2), RhythmConstraint::NoneAllowed]).unwrap();
        assert_eq!(json, r#"[{"kind":"at_least","n":2},{"kind":"none_allowed"}]"#);
    }
}
