use std::time::Instant;

use base64::Engine as _;
use ftg_core::guidance::{sample, Conditions};
use ftg_core::metrics::{out_of_key_rate, rhythm_constraint_rate};
use ftg_core::midi::emit_midi;
use ftg_core::pianoroll::{PianoRoll, PITCHES};
use ftg_core::roll_io::RollJson;
use ftg_core::theory::{build_constraint_mask, KeySignature, MaskOptions};
use ftg_core::CheckpointF64;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::request::GenerationRequest;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub out_of_key_rate: f64,
    /// Share of steps whose onset count meets the rhythm constraints; null
    /// when no rhythm was given.
    pub rhythm_match_rate: Option<f64>,
    pub wall_clock_ms: f64,
    pub seed: u64,
    pub reverse_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub checkpoint: Option<String>,
    pub length: usize,
    /// Key at every step.
    pub keys: Vec<KeySignature>,
    pub roll: RollJson<u8>,
    pub midi_base64: String,
    pub audit: Audit,
    pub warnings: Vec<String>,
}

impl GenerationResponse {
    pub fn accompaniment(&self) -> Result<PianoRoll, ServiceError> {
        Ok(PianoRoll::try_from(self.roll.clone())?)
    }

    pub fn midi_bytes(&self) -> Result<Vec<u8>, ServiceError> {
        base64::engine::general_purpose::STANDARD
            .decode(&self.midi_base64)
            .map_err(|e| ServiceError::internal(format!("bad base64: {e}")))
    }
}

/// Samples an accompaniment for `req` and audits it. Guarantees broken by the
/// result are reported as internal errors rather than returned.
pub fn generate(
    checkpoint: &CheckpointF64,
    checkpoint_id: Option<String>,
    req: &GenerationRequest,
) -> Result<GenerationResponse, ServiceError> {
    let started = Instant::now();
    let resolved = req.resolve()?;
    let sched = checkpoint.schedule.build::<f64>()?;
    let plan = req.sampler.plan(sched.steps())?;
    let mask = build_constraint_mask(&resolved.keys, &resolved.rhythm_specs, &MaskOptions::default())?;
    let conditions =
        Conditions::<f64>::new(&resolved.chords, resolved.rhythm.as_ref(), resolved.melody.clone(), mask.clone())?;
    let out = sample(&checkpoint.model, &conditions, &req.guidance, &plan, &sched, req.seed)?;

    let oov = out_of_key_rate(&out.roll, &resolved.keys)?;
    if req.guidance.harmonic && oov > 0.0 {
        return Err(ServiceError::internal(format!("harmonic guidance left out_of_key_rate {oov}")));
    }
    let rhythm_rate = if mask.has_rhythm() { Some(rhythm_constraint_rate(&out.roll, &resolved.rhythm_specs)?) } else { None };
    if req.guidance.rhythm && rhythm_rate.is_some_and(|r| r < 1.0) {
        return Err(ServiceError::internal(format!("rhythm guidance left rhythm_match_rate {rhythm_rate:?}")));
    }

    let melody = resolved.melody.clone().unwrap_or_else(|| PianoRoll::zeros(resolved.length, PITCHES));
    let midi = emit_midi(&melody, &out.roll, req.tempo_bpm)?;
    let reverse_steps = match &plan {
        ftg_core::guidance::SamplerPlan::Ddpm => sched.steps(),
        ftg_core::guidance::SamplerPlan::Ddim { steps, .. } => steps.len(),
    };
    Ok(GenerationResponse {
        checkpoint: checkpoint_id,
        length: resolved.length,
        keys: resolved.keys.keys().to_vec(),
        roll: RollJson::from(&out.roll),
        midi_base64: base64::engine::general_purpose::STANDARD.encode(&midi),
        audit: Audit {
            out_of_key_rate: oov,
            rhythm_match_rate: rhythm_rate,
            wall_clock_ms: started.elapsed().as_secs_f64() * 1e3,
            seed: req.seed,
            reverse_steps,
        },
        warnings: resolved.warnings,
    })
}
