//! Segment histograms, overlap metrics, chord similarity and constraint audits.

use serde::{Deserialize, Serialize};

use crate::error::{FtgError, Result};
use crate::pianoroll::PianoRoll;
use crate::theory::{
    build_constraint_mask, recognize_chords, ConstraintMask, KeySequence, MaskOptions, RhythmConstraint,
    RhythmPattern,
};

/// Steps per measure at 16th-note resolution.
pub const STEPS_PER_BAR: usize = 16;
/// Longest duration with its own bin; longer notes share the overflow bin.
pub const MAX_DURATION: usize = 32;
/// Largest per-step onset count with its own bin.
pub const MAX_DENSITY: usize = 12;
/// Chord recognition window used by [`chord_similarity`]: one beat.
pub const CHORD_GRANULARITY: usize = 4;
const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Pitch,
    Duration,
    Density,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::Pitch, Feature::Duration, Feature::Density];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Pitch => "pitch",
            Feature::Duration => "duration",
            Feature::Density => "density",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub start: usize,
    /// Steps of real data; shorter than the segment length only for a padded tail.
    pub real_steps: usize,
    pub padded: bool,
    pub roll: PianoRoll,
}

/// Non-overlapping segments of `bars_per_segment` measures. A trailing partial
/// segment is zero-padded and flagged.
pub fn segment(roll: &PianoRoll, bars_per_segment: usize) -> Vec<Segment> {
    let seg = (bars_per_segment * STEPS_PER_BAR).max(1);
    (0..roll.length())
        .step_by(seg)
        .map(|start| {
            let real_steps = (roll.length() - start).min(seg);
            Segment { start, real_steps, padded: real_steps < seg, roll: roll.window(start, seg) }
        })
        .collect()
}

/// Normalized feature histograms of one segment; `None` when the segment has no
/// notes starting in it.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentFeatures {
    pub pitch: Option<Vec<f64>>,
    pub duration: Option<Vec<f64>>,
    pub density: Option<Vec<f64>>,
}

impl SegmentFeatures {
    pub fn get(&self, feature: Feature) -> Option<&[f64]> {
        match feature {
            Feature::Pitch => self.pitch.as_deref(),
            Feature::Duration => self.duration.as_deref(),
            Feature::Density => self.density.as_deref(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pitch.is_none()
    }
}

fn normalize(counts: Vec<f64>) -> Option<Vec<f64>> {
    let total: f64 = counts.iter().sum();
    (total > 0.0).then(|| counts.into_iter().map(|c| c / total).collect())
}

/// Histograms for every 2-measure segment of `roll`. Durations come from the
/// whole roll, so a note crossing a segment boundary keeps its full length and
/// is counted in the segment where it starts.
pub fn segment_features(roll: &PianoRoll) -> Vec<SegmentFeatures> {
    let notes = roll.notes();
    segment(roll, 2)
        .iter()
        .map(|seg| {
            let end = seg.start + seg.real_steps;
            let inside: Vec<_> = notes.iter().filter(|n| n.start >= seg.start && n.start < end).collect();
            if inside.is_empty() {
                return SegmentFeatures { pitch: None, duration: None, density: None };
            }
            let mut pitch = vec![0.0; roll.pitches()];
            let mut duration = vec![0.0; MAX_DURATION + 1];
            for n in &inside {
                pitch[n.pitch] += 1.0;
                duration[n.duration.min(MAX_DURATION + 1) - 1] += 1.0;
            }
            let mut density = vec![0.0; MAX_DENSITY + 2];
            for l in seg.start..end {
                density[roll.onsets_at(l).count().min(MAX_DENSITY + 1)] += 1.0;
            }
            SegmentFeatures { pitch: normalize(pitch), duration: normalize(duration), density: normalize(density) }
        })
        .collect()
}

/// `Σ_b min(h1_b, h2_b)` for two normalized histograms on the same bins.
pub fn overlap(h1: &[f64], h2: &[f64]) -> Result<f64> {
    if h1.len() != h2.len() {
        return Err(FtgError::LengthMismatch { expected: h1.len(), got: h2.len() });
    }
    for h in [h1, h2] {
        let sum: f64 = h.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE || h.iter().any(|&v| v < 0.0) {
            return Err(FtgError::Unnormalized { sum });
        }
    }
    Ok(h1.iter().zip(h2).map(|(a, b)| a.min(*b)).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoaResult {
    pub mean: f64,
    pub segments: usize,
    /// The inputs had different segment counts and the longer one was cut.
    pub truncated: bool,
}

/// Mean per-segment overlap of the two rolls' feature histograms, aligned by
/// segment order. An empty/empty pair scores 1 and an empty/nonempty pair 0.
pub fn moa(gen: &PianoRoll, gt: &PianoRoll, feature: Feature) -> Result<MoaResult> {
    let a = segment_features(gen);
    let b = segment_features(gt);
    let n = a.len().min(b.len());
    if n == 0 {
        return Err(FtgError::InvalidInput("MOA needs at least one segment".into()));
    }
    let mut total = 0.0;
    for (fa, fb) in a.iter().zip(&b) {
        total += match (fa.get(feature), fb.get(feature)) {
            (None, None) => 1.0,
            (Some(x), Some(y)) => overlap(x, y)?,
            _ => 0.0,
        };
    }
    Ok(MoaResult { mean: total / n as f64, segments: n, truncated: a.len() != b.len() })
}

/// `mean ± ci95` summary in the report JSON shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub metric: String,
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
    #[serde(default, skip_serializing)]
    pub skipped: usize,
}

impl SimilarityReport {
    /// Mean with a normal-approximation 95% half-width `1.96·sd/√n`
    /// (sample standard deviation; 0 for a single value).
    pub fn from_values(metric: impl Into<String>, values: &[f64]) -> Self {
        let n = values.len();
        let mean = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
        let ci95 = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        };
        Self { metric: metric.into(), mean, ci95, n, skipped: 0 }
    }
}

/// CSV table with a `metric,mean,ci95,n` header.
pub fn reports_to_csv(reports: &[SimilarityReport]) -> String {
    let mut out = String::from("metric,mean,ci95,n\n");
    for r in reports {
        out.push_str(&format!("{},{},{},{}\n", r.metric, r.mean, r.ci95, r.n));
    }
    out
}

/// Duration-weighted chroma (12) plus bass/root (12) of recognized chords per
/// 2-measure segment.
pub fn chord_embeddings(roll: &PianoRoll) -> Result<Vec<[f64; 24]>> {
    let granularity = if roll.length().is_multiple_of(CHORD_GRANULARITY) { CHORD_GRANULARITY } else { 1 };
    let chords = recognize_chords(roll, granularity)?;
    let seg = 2 * STEPS_PER_BAR;
    Ok((0..roll.length())
        .step_by(seg)
        .map(|start| {
            let mut v = [0.0; 24];
            for l in start..(start + seg).min(roll.length()) {
                if let Some(c) = chords.at(l) {
                    for pc in c.pitch_classes().iter() {
                        v[pc as usize] += 1.0;
                    }
                    v[12 + c.root() as usize] += 1.0;
                }
            }
            v
        })
        .collect())
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

/// Per-segment cosine similarity of recognized-chord embeddings, aligned by
/// segment order. Pairs with a zero vector are skipped and counted.
pub fn chord_similarity(gen: &PianoRoll, gt: &PianoRoll) -> Result<SimilarityReport> {
    if gen.is_empty() || gt.is_empty() {
        return Err(FtgError::InvalidInput("chord similarity needs two nonempty rolls".into()));
    }
    let a = chord_embeddings(gen)?;
    let b = chord_embeddings(gt)?;
    let mut values = Vec::new();
    let mut skipped = 0;
    for (x, y) in a.iter().zip(&b) {
        match cosine(x, y) {
            Some(c) => values.push(c),
            None => skipped += 1,
        }
    }
    let mut report = SimilarityReport::from_values("chord_similarity", &values);
    report.skipped = skipped;
    Ok(report)
}

/// Share of onset cells that fall on masked positions; 0 without onsets.
pub fn out_of_key_rate_masked(roll: &PianoRoll, mask: &ConstraintMask) -> Result<f64> {
    mask.check_dims(roll.length(), roll.pitches())?;
    let (mut total, mut bad) = (0usize, 0usize);
    for l in 0..roll.length() {
        for h in roll.onsets_at(l) {
            total += 1;
            bad += usize::from(mask.is_out_of_key(l, h));
        }
    }
    Ok(if total == 0 { 0.0 } else { bad as f64 / total as f64 })
}

/// [`out_of_key_rate_masked`] against the default mask for `keys`.
pub fn out_of_key_rate(roll: &PianoRoll, keys: &KeySequence) -> Result<f64> {
    let opts = MaskOptions { pitches: roll.pitches(), ..MaskOptions::default() };
    let mask = build_constraint_mask(keys, &vec![RhythmConstraint::Unconstrained; keys.len()], &opts)?;
    out_of_key_rate_masked(roll, &mask)
}

/// Fraction of steps whose onset presence agrees with membership in `rhythm`.
pub fn rhythm_match_rate(roll: &PianoRoll, rhythm: &RhythmPattern) -> Result<f64> {
    if roll.length() != rhythm.length() {
        return Err(FtgError::LengthMismatch { expected: rhythm.length(), got: roll.length() });
    }
    if roll.length() == 0 {
        return Ok(1.0);
    }
    let hits = (0..roll.length()).filter(|&l| (roll.onsets_at(l).next().is_some()) == rhythm.contains(l)).count();
    Ok(hits as f64 / roll.length() as f64)
}

/// Fraction of steps whose onset count satisfies the step's rhythm requirement.
pub fn rhythm_constraint_rate(roll: &PianoRoll, specs: &[RhythmConstraint]) -> Result<f64> {
    if roll.length() != specs.len() {
        return Err(FtgError::LengthMismatch { expected: specs.len(), got: roll.length() });
    }
    if specs.is_empty() {
        return Ok(1.0);
    }
    let ok = specs.iter().enumerate().filter(|(l, s)| s.is_satisfied_by(roll.onsets_at(*l).count())).count();
    Ok(ok as f64 / specs.len() as f64)
}

