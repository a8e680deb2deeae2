//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Rolls, schedules, denoisers and the correction operators are generic over
//! [`Scalar`]; `f64` is the default everywhere and is what the sampler uses for
//! the zero-violation guarantee. `f32` is supported for memory-bound work.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// floating point: f32 or f64
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// One half, the binarization threshold.
#[inline]
pub fn half<S: Scalar>() -> S {
    S::lit(0.5)
}
