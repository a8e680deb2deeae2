use ftg_core::guidance::{ddim_timesteps, GuidanceConfig, SamplerPlan, DEFAULT_DDIM_STEPS};
use ftg_core::pianoroll::{PianoRoll, PITCHES};
use ftg_core::roll_io::RollJson;
use ftg_core::theory::{
    derive_keys_from_chords, parse_optional_chord, parse_rhythm_pattern, strict_constraints, ChordProgression,
    KeySequence, KeySignature, RhythmConstraint, RhythmPattern, DEFAULT_KEY_WINDOW,
};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub const DEFAULT_LENGTH: usize = 64;
pub const STEPS_PER_BEAT: usize = 4;
pub const STEPS_PER_BAR: usize = 16;

/// Time span of one entry in `chords` or `keys`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChordUnit {
    /// Picked from the entry count: one per step, beat or bar.
    #[default]
    Auto,
    Step,
    Beat,
    Bar,
}

impl ChordUnit {
    fn span(self) -> Option<usize> {
        match self {
            ChordUnit::Auto => None,
            ChordUnit::Step => Some(1),
            ChordUnit::Beat => Some(STEPS_PER_BEAT),
            ChordUnit::Bar => Some(STEPS_PER_BAR),
        }
    }
}

/// Accompaniment rhythm: a pattern string (`x` onset, `o` silent, `.` free,
/// digits for exact counts) or a list of onset steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhythmInput {
    Pattern(String),
    Onsets(Vec<usize>),
}

/// DDIM subsequence given as a count or as explicit timesteps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepsInput {
    Count(usize),
    List(Vec<usize>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    #[default]
    Ddim,
    Ddpm,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerRequest {
    pub mode: SamplerMode,
    pub steps: Option<StepsInput>,
    pub eta: f64,
}

impl SamplerRequest {
    pub fn plan(&self, total: usize) -> Result<SamplerPlan, ServiceError> {
        let plan = match (self.mode, &self.steps) {
            (SamplerMode::Ddpm, None) => SamplerPlan::Ddpm,
            (SamplerMode::Ddpm, Some(_)) => {
                return Err(ServiceError::bad_request("ddpm visits every timestep; omit sampler.steps"))
            }
            (SamplerMode::Ddim, steps) => {
                let steps = match steps {
                    None => ddim_timesteps(DEFAULT_DDIM_STEPS, total),
                    Some(StepsInput::Count(n)) => ddim_timesteps(*n, total),
                    Some(StepsInput::List(v)) => v.clone(),
                };
                SamplerPlan::Ddim { steps, eta: self.eta }
            }
        };
        plan.validate(total)?;
        Ok(plan)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationRequest {
    /// Chord symbols; `N` or an empty string for no chord.
    pub chords: Vec<String>,
    pub chord_unit: ChordUnit,
    /// Steps in the generated roll; inferred from the chords when absent.
    pub length: Option<usize>,
    /// One key for the whole piece.
    pub key: Option<String>,
    /// Keys in the same unit as `chords`.
    pub keys: Option<Vec<String>>,
    pub rhythm: Option<RhythmInput>,
    /// Per-step onset requirements; replaces those implied by `rhythm`.
    pub rhythm_constraints: Option<Vec<RhythmConstraint>>,
    pub melody: Option<RollJson<u8>>,
    pub guidance: GuidanceConfig,
    pub sampler: SamplerRequest,
    pub seed: u64,
    pub checkpoint: Option<String>,
    pub tempo_bpm: f64,
}

impl Default for GenerationRequest {
    fn default() -> Self {
        Self {
            chords: Vec::new(),
            chord_unit: ChordUnit::Auto,
            length: None,
            key: None,
            keys: None,
            rhythm: None,
            rhythm_constraints: None,
            melody: None,
            guidance: GuidanceConfig::default(),
            sampler: SamplerRequest::default(),
            seed: 0,
            checkpoint: None,
            tempo_bpm: 120.0,
        }
    }
}

/// A request checked and expanded to per-step form.
#[derive(Clone, Debug)]
pub struct ResolvedRequest {
    pub length: usize,
    pub chords: ChordProgression,
    pub keys: KeySequence,
    pub rhythm: Option<RhythmPattern>,
    pub rhythm_specs: Vec<RhythmConstraint>,
    pub melody: Option<PianoRoll>,
    pub warnings: Vec<String>,
}

fn unit_span(count: usize, length: Option<usize>, unit: ChordUnit, what: &str) -> Result<(usize, usize), ServiceError> {
    if count == 0 {
        return Err(ServiceError::bad_request(format!("{what} must not be empty")));
    }
    match (unit.span(), length) {
        (Some(span), None) => Ok((span, count * span)),
        (Some(span), Some(len)) if count * span == len => Ok((span, len)),
        (Some(span), Some(len)) => Err(ServiceError::bad_request(format!(
            "{count} {what} of {span} steps do not cover length {len}"
        ))),
        (None, len) => {
            let len = len.unwrap_or(DEFAULT_LENGTH);
            [1, STEPS_PER_BEAT, STEPS_PER_BAR]
                .into_iter()
                .find(|&span| count * span == len)
                .map(|span| (span, len))
                .ok_or_else(|| {
                    ServiceError::bad_request(format!(
                        "{count} {what} fit neither one per step, beat nor bar of a {len}-step roll"
                    ))
                })
        }
    }
}

fn expand<T: Clone>(items: Vec<T>, span: usize) -> Vec<T> {
    items.into_iter().flat_map(|x| std::iter::repeat_n(x, span)).collect()
}

fn parse_key(symbol: &str) -> Result<KeySignature, ServiceError> {
    symbol.parse().map_err(ServiceError::from)
}

fn describe_steps(steps: &[usize]) -> String {
    const SHOWN: usize = 8;
    let mut s = steps.iter().take(SHOWN).map(usize::to_string).collect::<Vec<_>>().join(", ");
    if steps.len() > SHOWN {
        s.push_str(&format!(" and {} more", steps.len() - SHOWN));
    }
    s
}

impl GenerationRequest {
    /// Roll length implied by `length`, `chords` and `chord_unit`.
    pub fn resolve_length(&self) -> Result<usize, ServiceError> {
        Ok(unit_span(self.chords.len(), self.length, self.chord_unit, "chords")?.1)
    }

    pub fn resolve(&self) -> Result<ResolvedRequest, ServiceError> {
        if let Some(0) = self.length {
            return Err(ServiceError::bad_request("length must be positive"));
        }
        if !(self.tempo_bpm.is_finite() && self.tempo_bpm > 0.0) {
            return Err(ServiceError::bad_request(format!("tempo_bpm must be positive, got {}", self.tempo_bpm)));
        }
        self.guidance.validate()?;

        let (span, length) = unit_span(self.chords.len(), self.length, self.chord_unit, "chords")?;
        let symbols =
            self.chords.iter().map(|s| parse_optional_chord(s).map_err(ServiceError::from)).collect::<Result<Vec<_>, _>>()?;
        let chords = ChordProgression::from_steps(expand(symbols, span));

        let mut warnings = Vec::new();
        let keys = match (&self.key, &self.keys) {
            (Some(_), Some(_)) => return Err(ServiceError::bad_request("give either key or keys, not both")),
            (Some(k), None) => KeySequence::constant(parse_key(k)?, length),
            (None, Some(ks)) => {
                let (kspan, _) = unit_span(ks.len(), Some(length), self.chord_unit, "keys")?;
                let parsed = ks.iter().map(|k| parse_key(k)).collect::<Result<Vec<_>, _>>()?;
                KeySequence::new(expand(parsed, kspan))
            }
            (None, None) => derive_keys_from_chords(&chords, DEFAULT_KEY_WINDOW),
        };
        if self.key.is_some() || self.keys.is_some() {
            let clashing: Vec<usize> = (0..length)
                .filter(|&l| !chords.pitch_classes_at(l).difference(keys.at(l).in_key()).is_empty())
                .collect();
            if !clashing.is_empty() {
                warnings.push(format!(
                    "chord tones fall outside the given key at steps {}; harmonic guidance will silence them",
                    describe_steps(&clashing)
                ));
            }
        }

        let (rhythm, mut rhythm_specs) = match &self.rhythm {
            None => (None, vec![RhythmConstraint::Unconstrained; length]),
            Some(RhythmInput::Onsets(onsets)) => {
                let r = RhythmPattern::new(length, onsets.iter().copied())?;
                let specs = strict_constraints(&r);
                (Some(r), specs)
            }
            Some(RhythmInput::Pattern(p)) => {
                let (r, specs) = parse_rhythm_pattern(p)?;
                let n = specs.len();
                if n == 0 || length % n != 0 {
                    return Err(ServiceError::bad_request(format!(
                        "rhythm pattern of {n} steps does not tile a {length}-step roll"
                    )));
                }
                let reps = length / n;
                let onsets = (0..reps).flat_map(|i| r.onsets().iter().map(move |&o| i * n + o));
                let r = RhythmPattern::new(length, onsets)?;
                (Some(r), specs.iter().copied().cycle().take(length).collect())
            }
        };
        if let Some(specs) = &self.rhythm_constraints {
            if specs.len() != length {
                return Err(ServiceError::bad_request(format!(
                    "rhythm_constraints has {} entries, expected {length}",
                    specs.len()
                )));
            }
            rhythm_specs = specs.iter().map(|c| c.validate()).collect::<Result<_, _>>()?;
        }

        let melody = match &self.melody {
            None => None,
            Some(json) => {
                let roll = PianoRoll::try_from(json.clone())?;
                if roll.length() != length || roll.pitches() != PITCHES {
                    return Err(ServiceError::bad_request(format!(
                        "melody must be a {length}-step, {PITCHES}-pitch roll, got {}x{}",
                        roll.length(),
                        roll.pitches()
                    )));
                }
                Some(roll)
            }
        };

        Ok(ResolvedRequest { length, chords, keys, rhythm, rhythm_specs, melody, warnings })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(chords: &[&str]) -> GenerationRequest {
        GenerationRequest { chords: chords.iter().map(|s| s.to_string()).collect(), ..GenerationRequest::default() }
    }

    #[test]
    fn chord_units_are_inferred() {
        let r = req(&["C", "F", "G", "C"]).resolve().unwrap();
        assert_eq!(r.length, 64);
        assert_eq!(r.chords.at(16).unwrap().to_string(), "F");
        let beats = req(&["C"; 16]).resolve().unwrap();
        assert_eq!(beats.length, 64);
        let bad = req(&["C"; 5]).resolve();
        assert_eq!(bad.unwrap_err().status(), 400);
    }

    #[test]
    fn explicit_unit_sets_length() {
        let mut r = req(&["C", "Am"]);
        r.chord_unit = ChordUnit::Beat;
        let out = r.resolve().unwrap();
        assert_eq!(out.length, 8);
        assert_eq!(out.chords.at(4).unwrap().to_string(), "Am");
    }

    #[test]
    fn rhythm_pattern_tiles() {
        let mut r = req(&["C"]);
        r.chord_unit = ChordUnit::Bar;
        r.rhythm = Some(RhythmInput::Pattern("x.o.".into()));
        let out = r.resolve().unwrap();
        assert_eq!(out.rhythm.unwrap().onsets(), &[0, 4, 8, 12]);
        assert_eq!(out.rhythm_specs[6], RhythmConstraint::NoneAllowed);
        r.rhythm = Some(RhythmInput::Pattern("x.o".into()));
        assert!(r.resolve().is_err());
    }

    #[test]
    fn clashing_key_warns() {
        let mut r = req(&["C", "E", "G", "C"]);
        r.key = Some("C".into());
        let out = r.resolve().unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("16"));
        r.chords = vec!["C".into(), "F".into(), "G".into(), "C".into()];
        assert!(r.resolve().unwrap().warnings.is_empty());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<GenerationRequest>(r#"{"chords":["C"],"colour":1}"#).is_err());
        let r: GenerationRequest = serde_json::from_str(r#"{"chords":["C"],"rhythm":[0,4]}"#).unwrap();
        assert_eq!(r.rhythm, Some(RhythmInput::Onsets(vec![0, 4])));
    }

    #[test]
    fn sampler_plans() {
        assert_eq!(SamplerRequest::default().plan(1000).unwrap(), SamplerPlan::default());
        let ddpm = SamplerRequest { mode: SamplerMode::Ddpm, ..SamplerRequest::default() };
        assert_eq!(ddpm.plan(1000).unwrap(), SamplerPlan::Ddpm);
        let bad = SamplerRequest { steps: Some(StepsInput::List(vec![5, 3])), ..SamplerRequest::default() };
        assert!(bad.plan(1000).is_err());
    }
}
