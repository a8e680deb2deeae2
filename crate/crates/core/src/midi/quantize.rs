//! Conversion between MIDI documents and 16th-note piano rolls.

use serde::{Deserialize, Serialize};

use super::smf::{parse_midi, write_midi, MidiDocument, MidiNote, MidiTrack, TempoEvent, TimeSignature};
use crate::error::{FtgError, Result};
use crate::pianoroll::{Note, PianoRoll, PITCHES};

pub const STEPS_PER_QUARTER: u64 = 4;
pub const SEGMENT_STEPS: usize = 64;
pub const EMIT_TICKS_PER_QUARTER: u16 = 480;
pub const EMIT_VELOCITY: u8 = 80;
pub const DEFAULT_TEMPO_BPM: f64 = 120.0;

pub const MELODY_TRACK: &str = "MELODY";
pub const ACCOMPANIMENT_TRACK: &str = "PIANO";

/// Nearest 16th step for `tick`; exact halves round up.
pub fn tick_to_step(tick: u64, ticks_per_quarter: u16) -> usize {
    let tpq = u64::from(ticks_per_quarter);
    ((2 * STEPS_PER_QUARTER * tick + tpq) / (2 * tpq)) as usize
}

fn check_meter(doc: &MidiDocument) -> Result<()> {
    if doc.ticks_per_quarter == 0 {
        return Err(FtgError::InvalidInput("ticks per quarter must be positive".into()));
    }
    match doc.time_signatures.iter().find(|ts| (ts.numerator, ts.denominator) != (4, 4)) {
        Some(ts) => Err(FtgError::RejectedPiece(format!(
            "time signature {}/{} at tick {}; only 4/4 is accepted",
            ts.numerator, ts.denominator, ts.tick
        ))),
        None => Ok(()),
    }
}

fn grid_notes(track: &MidiTrack, tpq: u16) -> Vec<Note> {
    track
        .notes
        .iter()
        .filter(|n| usize::from(n.pitch) < PITCHES)
        .map(|n| {
            let start = tick_to_step(n.start_tick, tpq);
            let end = tick_to_step(n.start_tick + n.duration_ticks, tpq);
            Note { start, duration: end.saturating_sub(start).max(1), pitch: usize::from(n.pitch) }
        })
        .collect()
}

/// Grid length covering every track's end and every quantized note.
pub fn grid_length(doc: &MidiDocument) -> usize {
    let tpq = u64::from(doc.ticks_per_quarter.max(1));
    let by_ticks = (doc.end_tick() * STEPS_PER_QUARTER).div_ceil(tpq) as usize;
    let by_notes = doc
        .tracks
        .iter()
        .flat_map(|t| grid_notes(t, doc.ticks_per_quarter))
        .map(|n| n.start + n.duration)
        .max()
        .unwrap_or(0);
    by_ticks.max(by_notes)
}

/// One roll per track, all of the document's common grid length. Onsets go to
/// the nearest 16th step, each note lasts at least one step and overlapping
/// notes of one pitch merge.
pub fn quantize(doc: &MidiDocument) -> Result<Vec<PianoRoll>> {
    check_meter(doc)?;
    let length = grid_length(doc);
    doc.tracks
        .iter()
        .map(|t| PianoRoll::from_notes(length, PITCHES, &grid_notes(t, doc.ticks_per_quarter)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackSelection {
    pub melody: Option<usize>,
    pub accompaniment: Option<usize>,
}

/// Picks the melody and accompaniment tracks by name ("MELODY", "PIANO", case
/// insensitive), else takes the tracks that carry notes in file order. A lone
/// note-carrying track is treated as accompaniment.
pub fn select_tracks(doc: &MidiDocument) -> TrackSelection {
    let named = |want: &str| {
        doc.tracks.iter().position(|t| t.name.as_deref().is_some_and(|n| n.trim().eq_ignore_ascii_case(want)))
    };
    let (melody, accompaniment) = (named(MELODY_TRACK), named(ACCOMPANIMENT_TRACK));
    if melody.is_some() || accompaniment.is_some() {
        return TrackSelection { melody, accompaniment };
    }
    let voiced: Vec<usize> = (0..doc.tracks.len()).filter(|&i| !doc.tracks[i].notes.is_empty()).collect();
    match voiced.as_slice() {
        [] => TrackSelection { melody: None, accompaniment: None },
        [only] => TrackSelection { melody: None, accompaniment: Some(*only) },
        [m, a, ..] => TrackSelection { melody: Some(*m), accompaniment: Some(*a) },
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedPiece {
    pub melody: PianoRoll,
    pub accompaniment: PianoRoll,
    pub selection: TrackSelection,
}

/// Parses, quantizes and selects tracks; a missing track becomes an empty roll.
pub fn load_piece(bytes: &[u8]) -> Result<QuantizedPiece> {
    let doc = parse_midi(bytes)?;
    let rolls = quantize(&doc)?;
    let selection = select_tracks(&doc);
    let length = grid_length(&doc);
    let pick = |i: Option<usize>| i.map_or_else(|| PianoRoll::zeros(length, PITCHES), |i| rolls[i].clone());
    Ok(QuantizedPiece { melody: pick(selection.melody), accompaniment: pick(selection.accompaniment), selection })
}

/// Non-overlapping 4-measure windows; a trailing partial window is dropped.
pub fn segment_4bars(roll: &PianoRoll) -> Vec<PianoRoll> {
    (0..roll.length() / SEGMENT_STEPS).map(|i| roll.window(i * SEGMENT_STEPS, SEGMENT_STEPS)).collect()
}

fn roll_track(name: &str, roll: &PianoRoll, channel: u8) -> MidiTrack {
    let ticks_per_step = u64::from(EMIT_TICKS_PER_QUARTER) / STEPS_PER_QUARTER;
    let notes = roll
        .notes()
        .into_iter()
        .map(|n| MidiNote {
            start_tick: n.start as u64 * ticks_per_step,
            duration_ticks: n.duration as u64 * ticks_per_step,
            pitch: n.pitch as u8,
            velocity: EMIT_VELOCITY,
            channel,
        })
        .collect();
    MidiTrack { name: Some(name.into()), notes, end_tick: roll.length() as u64 * ticks_per_step }
}

/// Two-track MIDI document for a melody and accompaniment pair on one grid.
pub fn rolls_to_document(melody: &PianoRoll, accompaniment: &PianoRoll, tempo_bpm: f64) -> Result<MidiDocument> {
    for roll in [melody, accompaniment] {
        if roll.pitches() > PITCHES {
            return Err(FtgError::InvalidInput(format!("roll has {} pitches, MIDI allows {PITCHES}", roll.pitches())));
        }
    }
    if !(tempo_bpm.is_finite() && tempo_bpm > 0.0) {
        return Err(FtgError::InvalidInput(format!("tempo must be positive, got {tempo_bpm}")));
    }
    let micros = (60_000_000.0 / tempo_bpm).round().clamp(1.0, 16_777_215.0) as u32;
    Ok(MidiDocument {
        format: 1,
        ticks_per_quarter: EMIT_TICKS_PER_QUARTER,
        tempos: vec![TempoEvent { tick: 0, micros_per_quarter: micros }],
        time_signatures: vec![TimeSignature { tick: 0, numerator: 4, denominator: 4 }],
        tracks: vec![roll_track(MELODY_TRACK, melody, 0), roll_track(ACCOMPANIMENT_TRACK, accompaniment, 1)],
    })
}

/// SMF type 1 bytes with a MELODY and a PIANO track, 16th-grid timing and
/// velocity 80. Sustain cells not attached to an onset are not written.
pub fn emit_midi(melody: &PianoRoll, accompaniment: &PianoRoll, tempo_bpm: f64) -> Result<Vec<u8>> {
    Ok(write_midi(&rolls_to_document(melody, accompaniment, tempo_bpm)?))
}
