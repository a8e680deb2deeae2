//! MIDI ingestion and emission, 4-measure segmentation and the synthetic corpus.

mod corpus;
mod quantize;
mod smf;

pub use corpus::{piece_file_name, roman_chord, synth_corpus, CorpusManifest, CorpusPiece, CorpusSpec, PieceMeta};
pub use quantize::{
    emit_midi, grid_length, load_piece, quantize, rolls_to_document, segment_4bars, select_tracks, tick_to_step,
    QuantizedPiece, TrackSelection, ACCOMPANIMENT_TRACK, DEFAULT_TEMPO_BPM, EMIT_TICKS_PER_QUARTER, EMIT_VELOCITY,
    MELODY_TRACK, SEGMENT_STEPS, STEPS_PER_QUARTER,
};
pub use smf::{parse_midi, write_midi, MidiDocument, MidiNote, MidiTrack, TempoEvent, TimeSignature};
