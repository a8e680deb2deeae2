//! `FTGC` checkpoint files.
//!
//! Little-endian layout: `b"FTGC"`, `u32` version, schedule (`u32` steps,
//! `f64` beta_first, `f64` beta_last, `f64` eta, `u8` sigma rule), model
//! config (`u32` width, `u32` embed_dim, `u64` seed), `u32` parameter count,
//! then the parameters as `f32`.

use std::path::Path;

use super::schedule::{ScheduleConfig, SigmaRule};
use super::toy::{ToyConfig, ToyDenoiser, Trainable};
use crate::error::{FtgError, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FTGC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<S = f64> {
    pub schedule: ScheduleConfig,
    pub model: ToyDenoiser<S>,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let s = &self.schedule;
        out.extend_from_slice(&(s.steps as u32).to_le_bytes());
        for v in [s.beta_first, s.beta_last, s.eta] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(match s.sigma_rule {
            SigmaRule::Common => 0,
            SigmaRule::Literal => 1,
        });
        let c = self.model.config();
        out.extend_from_slice(&(c.width as u32).to_le_bytes());
        out.extend_from_slice(&(c.embed_dim as u32).to_le_bytes());
        out.extend_from_slice(&c.seed.to_le_bytes());
        let params = self.model.params();
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for p in params {
            out.extend_from_slice(&(p.to_f64_lossy() as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(FtgError::Format("missing FTGC magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(FtgError::Format(format!("unsupported checkpoint version {version}")));
        }
        let steps = r.u32()? as usize;
        let (beta_first, beta_last, eta) = (r.f64()?, r.f64()?, r.f64()?);
        let sigma_rule = match r.take(1)?[0] {
            0 => SigmaRule::Common,
            1 => SigmaRule::Literal,
            other => return Err(FtgError::Format(format!("unknown sigma rule tag {other}"))),
        };
        let schedule = ScheduleConfig { steps, beta_first, beta_last, eta, sigma_rule };
        schedule.build::<f64>()?;
        let width = r.u32()? as usize;
        let embed_dim = r.u32()? as usize;
        let seed = r.u64()?;
        let count = r.u32()? as usize;
        let raw = r.take(count.checked_mul(4).ok_or_else(|| FtgError::Format("parameter count overflow".into()))?)?;
        if r.at != bytes.len() {
            return Err(FtgError::Format(format!("{} trailing bytes", bytes.len() - r.at)));
        }
        let params = raw.chunks_exact(4).map(|b| S::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)).collect();
        let model = ToyDenoiser::from_params(ToyConfig { width, embed_dim, seed }, params)?;
        Ok(Self { schedule, model })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| FtgError::Format(format!("truncated checkpoint at byte {}", self.at)))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_for_f32_params() {
        let model = ToyDenoiser::<f32>::new(ToyConfig { width: 4, embed_dim: 6, seed: 9 }).unwrap();
        let ck = Checkpoint { schedule: ScheduleConfig::default(), model };
        let back = Checkpoint::<f32>::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn rejects_corruption() {
        let model = ToyDenoiser::<f64>::new(ToyConfig::default()).unwrap();
        let bytes = Checkpoint { schedule: ScheduleConfig::default(), model }.to_bytes();
        assert!(Checkpoint::<f64>::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::<f64>::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(Checkpoint::<f64>::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::<f64>::from_bytes(&long).is_err());
    }
}
