//! Roll serialization: canonical JSON and the `FTGR` binary fixture format.
//!
//! JSON layout: `{"channels":2,"length":L,"pitches":128,"data":[...]}` with
//! `data` in row-major `(channel, step, pitch)` order.
//!
//! Binary layout (little-endian): `b"FTGR"`, `u32` channels, `u32` length,
//! `u32` pitches, `u32` encoding (0 = float32 payload, 1 = bit-packed payload,
//! LSB-first within each byte), then the payload.

use serde::{Deserialize, Serialize};

use crate::error::{FtgError, Result};
use crate::pianoroll::{LatentRoll, PianoRoll, Shape};
use crate::scalar::Scalar;

pub const ROLL_MAGIC: &[u8; 4] = b"FTGR";
const ENCODING_F32: u32 = 0;
const ENCODING_BITS: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RollJson<T> {
    pub channels: usize,
    pub length: usize,
    pub pitches: usize,
    pub data: Vec<T>,
}

impl<T> RollJson<T> {
    fn shape(&self) -> Shape {
        Shape::new(self.channels, self.length, self.pitches)
    }
}

impl From<&PianoRoll> for RollJson<u8> {
    fn from(roll: &PianoRoll) -> Self {
        let s = roll.shape();
        Self { channels: s.channels, length: s.length, pitches: s.pitches, data: roll.cells().to_vec() }
    }
}

impl TryFrom<RollJson<u8>> for PianoRoll {
    type Error = FtgError;

    fn try_from(json: RollJson<u8>) -> Result<Self> {
        let shape = json.shape();
        PianoRoll::from_cells(shape, json.data)
    }
}

impl<S: Scalar> From<&LatentRoll<S>> for RollJson<f64> {
    fn from(roll: &LatentRoll<S>) -> Self {
        let s = roll.shape();
        Self {
            channels: s.channels,
            length: s.length,
            pitches: s.pitches,
            data: roll.data().iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }
}

impl RollJson<f64> {
    pub fn into_latent<S: Scalar>(self) -> Result<LatentRoll<S>> {
        let shape = self.shape();
        LatentRoll::from_vec(shape, self.data.into_iter().map(S::lit).collect())
    }
}

pub fn piano_roll_to_json(roll: &PianoRoll) -> String {
    serde_json::to_string(&RollJson::from(roll)).expect("roll JSON serialization")
}

pub fn piano_roll_from_json(text: &str) -> Result<PianoRoll> {
    let json: RollJson<u8> = serde_json::from_str(text)?;
    json.try_into()
}

fn header(shape: Shape, encoding: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(20);
    out.extend_from_slice(ROLL_MAGIC);
    for v in [shape.channels as u32, shape.length as u32, shape.pitches as u32, encoding] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Bit-packed binary fixture of a piano roll.
pub fn piano_roll_to_bytes(roll: &PianoRoll) -> Vec<u8> {
    let mut out = header(roll.shape(), ENCODING_BITS);
    let mut packed = vec![0u8; roll.cells().len().div_ceil(8)];
    for (i, &c) in roll.cells().iter().enumerate() {
        packed[i / 8] |= c << (i % 8);
    }
    out.extend_from_slice(&packed);
    out
}

/// Float32 binary fixture of a latent roll.
pub fn latent_to_bytes<S: Scalar>(roll: &LatentRoll<S>) -> Vec<u8> {
    let mut out = header(roll.shape(), ENCODING_F32);
    for v in roll.data() {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    out
}

/// Decoded fixture: which payload the file carried.
#[derive(Clone, Debug, PartialEq)]
pub enum Fixture {
    Bits(PianoRoll),
    Float(LatentRoll<f32>),
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| FtgError::Format(format!("truncated fixture header at byte {at}")))
}

pub fn fixture_from_bytes(bytes: &[u8]) -> Result<Fixture> {
    if bytes.get(..4) != Some(ROLL_MAGIC.as_slice()) {
        return Err(FtgError::Format("missing FTGR magic".into()));
    }
    let shape = Shape::new(
        read_u32(bytes, 4)? as usize,
        read_u32(bytes, 8)? as usize,
        read_u32(bytes, 12)? as usize,
    );
    let payload = &bytes[20.min(bytes.len())..];
    match read_u32(bytes, 16)? {
        ENCODING_BITS => {
            let n = shape.numel();
            if payload.len() != n.div_ceil(8) {
                return Err(FtgError::Format("bit payload length mismatch".into()));
            }
            let cells = (0..n).map(|i| (payload[i / 8] >> (i % 8)) & 1).collect();
            Ok(Fixture::Bits(PianoRoll::from_cells(shape, cells)?))
        }
        ENCODING_F32 => {
            if payload.len() != shape.numel() * 4 {
                return Err(FtgError::Format("float payload length mismatch".into()));
            }
            let data = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            Ok(Fixture::Float(LatentRoll::from_vec(shape, data)?))
        }
        other => Err(FtgError::Format(format!("unknown fixture encoding {other}"))),
    }
}
