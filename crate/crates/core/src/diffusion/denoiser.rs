use crate::error::{FtgError, Result};
use crate::pianoroll::{LatentRoll, ModelInput, Shape};
use crate::scalar::Scalar;

use super::schedule::NoiseSchedule;

/// A noise predictor `ε_θ(input, t)`.
///
/// Implementations must be deterministic given the input, the step and their
/// parameters, and safe to call from several threads at once.
pub trait Denoiser<S: Scalar>: Send + Sync {
    fn predict(&self, input: &ModelInput<S>, t: usize) -> Result<LatentRoll<S>>;

    fn supports_conditions(&self) -> bool {
        true
    }

    fn supports_melody(&self) -> bool {
        true
    }
}

impl<S: Scalar, D: Denoiser<S> + ?Sized> Denoiser<S> for &D {
    fn predict(&self, input: &ModelInput<S>, t: usize) -> Result<LatentRoll<S>> {
        (**self).predict(input, t)
    }

    fn supports_conditions(&self) -> bool {
        (**self).supports_conditions()
    }

    fn supports_melody(&self) -> bool {
        (**self).supports_melody()
    }
}

impl<S: Scalar, D: Denoiser<S> + ?Sized> Denoiser<S> for Box<D> {
    fn predict(&self, input: &ModelInput<S>, t: usize) -> Result<LatentRoll<S>> {
        (**self).predict(input, t)
    }

    fn supports_conditions(&self) -> bool {
        (**self).supports_conditions()
    }

    fn supports_melody(&self) -> bool {
        (**self).supports_melody()
    }
}

/// Exact noise prediction for per-cell Gaussian data `N(μ, v)`:
/// `ε* = (x_t − √ᾱ_t·μ)·√(1−ᾱ_t) / (ᾱ_t·v + 1 − ᾱ_t)`.
pub fn oracle_epsilon<S: Scalar>(
    x_t: &LatentRoll<S>,
    t: usize,
    sched: &NoiseSchedule<S>,
    mu: &[S],
    var: &[S],
) -> Result<LatentRoll<S>> {
    sched.check_step(t)?;
    let n = x_t.data().len();
    if mu.len() != n || var.len() != n {
        return Err(FtgError::LengthMismatch { expected: n, got: mu.len().min(var.len()) });
    }
    let a = sched.alpha_bar(t);
    let (sa, sb) = (a.sqrt(), (S::one() - a).sqrt());
    let data = x_t
        .data()
        .iter()
        .zip(mu.iter().zip(var))
        .map(|(&x, (&m, &v))| (x - sa * m) * sb / (a * v + S::one() - a))
        .collect();
    LatentRoll::from_vec(x_t.shape(), data)
}

/// Denoiser returning [`oracle_epsilon`] for a fixed Gaussian data law; ignores
/// conditions and melody.
#[derive(Clone, Debug)]
pub struct GaussianOracleDenoiser<S = f64> {
    shape: Shape,
    mu: Vec<S>,
    var: Vec<S>,
    sched: NoiseSchedule<S>,
}

impl<S: Scalar> GaussianOracleDenoiser<S> {
    pub fn new(shape: Shape, mu: Vec<S>, var: Vec<S>, sched: NoiseSchedule<S>) -> Result<Self> {
        if mu.len() != shape.numel() || var.len() != shape.numel() {
            return Err(FtgError::LengthMismatch { expected: shape.numel(), got: mu.len().min(var.len()) });
        }
        if let Some(i) = var.iter().position(|&v| !(v > S::zero())) {
            return Err(FtgError::InvalidInput(format!("oracle variance at {i} must be positive")));
        }
        Ok(Self { shape, mu, var, sched })
    }

    pub fn mean(&self) -> &[S] {
        &self.mu
    }

    pub fn variance(&self) -> &[S] {
        &self.var
    }
}

impl<S: Scalar> Denoiser<S> for GaussianOracleDenoiser<S> {
    fn predict(&self, input: &ModelInput<S>, t: usize) -> Result<LatentRoll<S>> {
        let x_t = input.block(0);
        self.shape.check_same(&x_t.shape())?;
        oracle_epsilon(&x_t, t, &self.sched, &self.mu, &self.var)
    }

    fn supports_conditions(&self) -> bool {
        false
    }

    fn supports_melody(&self) -> bool {
        false
    }
}
