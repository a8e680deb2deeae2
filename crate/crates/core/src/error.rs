use thiserror::Error;

use crate::pianoroll::Shape;

/// Errors raised across the engine.
#[derive(Debug, Error)]
pub enum FtgError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: Shape, got: Shape },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("timestep {t} outside [1, {max}]")]
    StepOutOfRange { t: usize, max: usize },

    #[error("invalid noise schedule: {0}")]
    Schedule(String),

    /// A rhythm constraint cannot be met; `columns` lists every offending time step.
    #[error("infeasible constraint at columns {columns:?}: {reason}")]
    Infeasible { columns: Vec<usize>, reason: String },

    #[error("histogram is not normalized (sum = {sum})")]
    Unnormalized { sum: f64 },

    #[error("MIDI parse error at byte {offset}: {message}")]
    MidiParse { offset: usize, message: String },

    #[error("piece rejected: {0}")]
    RejectedPiece(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = FtgError> = std::result::Result<T, E>;
