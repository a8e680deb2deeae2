use std::path::{Path, PathBuf};

use ftg_core::diffusion::TrainingExample;
use ftg_core::metrics::{chord_embeddings, cosine, moa, Feature, SimilarityReport};
use ftg_core::midi::{emit_midi, load_piece, segment_4bars, synth_corpus, CorpusManifest, CorpusSpec, QuantizedPiece};
use ftg_core::pianoroll::PITCHES;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Chord recognition window for training data: one measure.
pub const TRAIN_CHORD_GRANULARITY: usize = 16;

/// Reads a TOML file (by extension) or JSON.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, ServiceError> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| ServiceError::bad_request(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| ServiceError::bad_request(format!("{}: {e}", path.display())))
    }
}

/// `*.mid` files directly in `dir`, sorted by name.
pub fn midi_files(dir: &Path) -> Result<Vec<PathBuf>, ServiceError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| ServiceError::from(e).with_context(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_midi_file(path: &Path) -> Result<QuantizedPiece, ServiceError> {
    let bytes = std::fs::read(path).map_err(|e| ServiceError::from(e).with_context(path))?;
    load_piece(&bytes).map_err(|e| ServiceError::from(e).with_context(path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub dir: PathBuf,
    pub pieces: usize,
    pub manifest: PathBuf,
}

/// Writes `piece_NNNN.mid` files and a manifest.
pub fn write_corpus(spec: &CorpusSpec, dir: &Path) -> Result<CorpusSummary, ServiceError> {
    let pieces = synth_corpus(spec)?;
    std::fs::create_dir_all(dir)?;
    let manifest = CorpusManifest::new(spec, &pieces);
    for (meta, piece) in manifest.pieces.iter().zip(&pieces) {
        let bytes = emit_midi(&piece.melody, &piece.accompaniment, ftg_core::midi::DEFAULT_TEMPO_BPM)?;
        std::fs::write(dir.join(&meta.file), bytes)?;
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(CorpusSummary { dir: dir.to_path_buf(), pieces: pieces.len(), manifest: manifest_path })
}

/// 4-measure training windows from every MIDI file in `dir`; windows with a
/// silent accompaniment are skipped.
pub fn training_examples(dir: &Path) -> Result<Vec<TrainingExample<f64>>, ServiceError> {
    let mut out = Vec::new();
    for path in midi_files(dir)? {
        let piece = load_midi_file(&path)?;
        for (acc, mel) in segment_4bars(&piece.accompaniment).into_iter().zip(segment_4bars(&piece.melody)) {
            if acc.is_empty() {
                continue;
            }
            out.push(TrainingExample::from_rolls(&acc, Some(mel), TRAIN_CHORD_GRANULARITY)?);
        }
    }
    if out.is_empty() {
        return Err(ServiceError::bad_request(format!("no 4-measure training windows under {}", dir.display())));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub pairs: usize,
    /// Pieces present on one side only.
    pub unmatched: Vec<String>,
    /// Pairs dropped because an accompaniment was silent.
    pub skipped: usize,
    pub reports: Vec<SimilarityReport>,
}

/// Accompaniment similarity between same-named files in `gen_dir` and
/// `gt_dir`: chord similarity pooled over 2-measure segments and per-piece
/// MOA for each feature.
pub fn evaluate_dirs(gen_dir: &Path, gt_dir: &Path) -> Result<EvaluationReport, ServiceError> {
    let name = |p: &PathBuf| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let gen_files = midi_files(gen_dir)?;
    let gt_files = midi_files(gt_dir)?;
    let gt_names: Vec<String> = gt_files.iter().map(name).collect();
    let mut unmatched: Vec<String> = gen_files.iter().map(name).filter(|n| !gt_names.contains(n)).collect();

    let mut chord_values = Vec::new();
    let mut moa_values: Vec<Vec<f64>> = vec![Vec::new(); Feature::ALL.len()];
    let (mut pairs, mut skipped) = (0, 0);
    for gt_path in &gt_files {
        let gen_path = gen_dir.join(name(gt_path));
        if !gen_path.is_file() {
            unmatched.push(name(gt_path));
            continue;
        }
        pairs += 1;
        let gen = load_midi_file(&gen_path)?.accompaniment;
        let gt = load_midi_file(gt_path)?.accompaniment;
        if gen.is_empty() || gt.is_empty() {
            skipped += 1;
            continue;
        }
        for (a, b) in chord_embeddings(&gen)?.iter().zip(&chord_embeddings(&gt)?) {
            if let Some(c) = cosine(a, b) {
                chord_values.push(c);
            }
        }
        for (values, feature) in moa_values.iter_mut().zip(Feature::ALL) {
            values.push(moa(&gen, &gt, feature)?.mean);
        }
    }
    unmatched.sort();
    let mut reports = vec![SimilarityReport::from_values("chord_similarity", &chord_values)];
    for (values, feature) in moa_values.iter().zip(Feature::ALL) {
        reports.push(SimilarityReport::from_values(format!("oa_{}", feature.name()), values));
    }
    Ok(EvaluationReport { pairs, unmatched, skipped, reports })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub name: Option<String>,
    pub notes: usize,
    pub end_tick: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidiSummary {
    pub format: u16,
    pub ticks_per_quarter: u16,
    pub tracks: Vec<TrackSummary>,
    pub melody_track: Option<usize>,
    pub accompaniment_track: Option<usize>,
    pub steps: usize,
    pub melody_notes: usize,
    pub accompaniment_notes: usize,
}

pub fn inspect_midi(bytes: &[u8]) -> Result<MidiSummary, ServiceError> {
    let doc = ftg_core::midi::parse_midi(bytes)?;
    let piece = load_piece(bytes)?;
    Ok(MidiSummary {
        format: doc.format,
        ticks_per_quarter: doc.ticks_per_quarter,
        tracks: doc
            .tracks
            .iter()
            .map(|t| TrackSummary { name: t.name.clone(), notes: t.notes.len(), end_tick: t.end_tick })
            .collect(),
        melody_track: piece.selection.melody,
        accompaniment_track: piece.selection.accompaniment,
        steps: piece.accompaniment.length(),
        melody_notes: piece.melody.notes().len(),
        accompaniment_notes: piece.accompaniment.notes().len(),
    })
}

/// Melody and accompaniment rolls as one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceJson {
    pub melody: ftg_core::roll_io::RollJson<u8>,
    pub accompaniment: ftg_core::roll_io::RollJson<u8>,
}

pub fn midi_to_json(bytes: &[u8]) -> Result<PieceJson, ServiceError> {
    let piece = load_piece(bytes)?;
    Ok(PieceJson { melody: (&piece.melody).into(), accompaniment: (&piece.accompaniment).into() })
}

pub fn json_to_midi(piece: &PieceJson, tempo_bpm: f64) -> Result<Vec<u8>, ServiceError> {
    let melody = ftg_core::pianoroll::PianoRoll::try_from(piece.melody.clone())?;
    let acc = ftg_core::pianoroll::PianoRoll::try_from(piece.accompaniment.clone())?;
    if melody.pitches() != PITCHES || acc.pitches() != PITCHES || melody.length() != acc.length() {
        return Err(ServiceError::bad_request("melody and accompaniment must be 128-pitch rolls of equal length"));
    }
    Ok(emit_midi(&melody, &acc, tempo_bpm)?)
}
