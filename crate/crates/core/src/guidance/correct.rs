//! Noise corrections that move the predicted clean sample into the constraint set.
//!
//! Every correction works per cell in ε space. With `s = √ᾱ_t`, `r = √(1−ᾱ_t)`
//! and `p = (x_t − r·ε)/s`, the bound `p ≤ q` becomes `ε ≥ (x_t − s·q)/r`, so
//! clamping `p` is a `max`/`min` against a fixed bound and applying a correction
//! twice gives the same result as applying it once.

use crate::error::{FtgError, Result};
use crate::pianoroll::{LatentRoll, Shape, ONSET, ROLL_CHANNELS};
use crate::scalar::{half, Scalar};
use crate::theory::{ConstraintMask, RhythmConstraint};

use crate::diffusion::NoiseSchedule;

pub const DEFAULT_KAPPA: f64 = 1e-6;

/// `(x_t − √(1−ᾱ_t)·ε) / √ᾱ_t`.
pub fn predict_x0<S: Scalar>(
    x_t: &LatentRoll<S>,
    eps: &LatentRoll<S>,
    t: usize,
    sched: &NoiseSchedule<S>,
) -> Result<LatentRoll<S>> {
    sched.check_step(t)?;
    let a = sched.alpha_bar(t);
    if a <= S::zero() {
        return Err(FtgError::Schedule(format!("alpha_bar({t}) is zero")));
    }
    let c = Coeffs { s: a.sqrt(), r: (S::one() - a).sqrt() };
    x_t.zip_with(eps, |x, e| c.x0(x, e))
}

#[derive(Clone, Copy)]
struct Coeffs<S> {
    s: S,
    r: S,
}

impl<S: Scalar> Coeffs<S> {
    fn at(sched: &NoiseSchedule<S>, t: usize) -> Result<Self> {
        sched.check_step(t)?;
        let a = sched.alpha_bar(t);
        if a <= S::zero() {
            return Err(FtgError::Schedule(format!("alpha_bar({t}) is zero")));
        }
        let r = (S::one() - a).sqrt();
        if r <= S::zero() {
            return Err(FtgError::Schedule(format!("alpha_bar({t}) is one; no noise to correct")));
        }
        Ok(Self { s: a.sqrt(), r })
    }

    #[inline]
    fn x0(self, x: S, e: S) -> S {
        (x - self.r * e) / self.s
    }

    /// The ε at which the predicted clean value equals `q`.
    #[inline]
    fn bound(self, x: S, q: S) -> S {
        (x - self.s * q) / self.r
    }
}

fn check_inputs<S: Scalar>(eps: &LatentRoll<S>, x_t: &LatentRoll<S>, mask: &ConstraintMask) -> Result<Shape> {
    let shape = eps.shape();
    shape.check_same(&x_t.shape())?;
    if shape.channels != ROLL_CHANNELS {
        return Err(FtgError::InvalidInput("corrections expect 2-channel latents".into()));
    }
    mask.check_dims(shape.length, shape.pitches)?;
    Ok(shape)
}

/// Clamps the predicted clean value to at most `1/2 − κ` at every masked
/// position, on both channels. Unmasked cells are returned untouched.
pub fn correct_harmonic<S: Scalar>(
    eps_hat: &LatentRoll<S>,
    x_t: &LatentRoll<S>,
    t: usize,
    mask: &ConstraintMask,
    kappa: S,
    sched: &NoiseSchedule<S>,
) -> Result<LatentRoll<S>> {
    let shape = check_inputs(eps_hat, x_t, mask)?;
    let c = Coeffs::at(sched, t)?;
    let off = half::<S>() - kappa;
    let mut out = eps_hat.clone();
    for ch in 0..ROLL_CHANNELS {
        for l in 0..shape.length {
            for h in 0..shape.pitches {
                if mask.is_out_of_key(l, h) {
                    let i = shape.index(ch, l, h);
                    let e = &mut out.data_mut()[i];
                    *e = e.max(c.bound(x_t.data()[i], off));
                }
            }
        }
    }
    Ok(out)
}

/// Applies each column's rhythm requirement on the onset channel.
///
/// Candidate pitches are all pitches, or only the in-key ones when the mask's
/// `rhythm_in_key_only` flag is set. An onset counts when the predicted value is
/// at least `1/2`; forced onsets are raised to `1/2 + κ` and forced silences
/// lowered to `1/2 − κ`.
pub fn correct_rhythm<S: Scalar>(
    eps_hat: &LatentRoll<S>,
    x_t: &LatentRoll<S>,
    t: usize,
    mask: &ConstraintMask,
    kappa: S,
    sched: &NoiseSchedule<S>,
) -> Result<LatentRoll<S>> {
    rhythm_impl(eps_hat, x_t, t, mask, kappa, sched, mask.rhythm_in_key_only())
}

/// Harmonic clamp on both channels followed by rhythm selection restricted to
/// in-key pitches.
pub fn correct_joint<S: Scalar>(
    eps_hat: &LatentRoll<S>,
    x_t: &LatentRoll<S>,
    t: usize,
    mask: &ConstraintMask,
    kappa: S,
    sched: &NoiseSchedule<S>,
) -> Result<LatentRoll<S>> {
    let harmonic = correct_harmonic(eps_hat, x_t, t, mask, kappa, sched)?;
    rhythm_impl(&harmonic, x_t, t, mask, kappa, sched, true)
}

/// Selection costs under the onset threshold rule: how far `p` must move to be
/// counted on (`≥ 1/2`, landing at `1/2 + κ`) or off (landing at `≤ 1/2 − κ`).
#[inline]
pub fn on_cost<S: Scalar>(p: S, kappa: S) -> S {
    if p >= half() {
        S::zero()
    } else {
        let d = half::<S>() + kappa - p;
        d * d
    }
}

#[inline]
pub fn off_cost<S: Scalar>(p: S, kappa: S) -> S {
    let lim = half::<S>() - kappa;
    if p <= lim {
        S::zero()
    } else {
        let d = p - lim;
        d * d
    }
}

fn rhythm_impl<S: Scalar>(
    eps_hat: &LatentRoll<S>,
    x_t: &LatentRoll<S>,
    t: usize,
    mask: &ConstraintMask,
    kappa: S,
    sched: &NoiseSchedule<S>,
    in_key_only: bool,
) -> Result<LatentRoll<S>> {
    let shape = check_inputs(eps_hat, x_t, mask)?;
    let c = Coeffs::at(sched, t)?;
    let on = half::<S>() + kappa;
    let off = half::<S>() - kappa;

    let candidates = |l: usize| -> Vec<usize> {
        (0..shape.pitches).filter(|&h| !in_key_only || !mask.is_out_of_key(l, h)).collect()
    };
    let mut infeasible = Vec::new();
    for l in 0..shape.length {
        if let RhythmConstraint::Exactly(n) | RhythmConstraint::AtLeast(n) = mask.rhythm_at(l) {
            if n > candidates(l).len() {
                infeasible.push(l);
            }
        }
    }
    if !infeasible.is_empty() {
        return Err(FtgError::Infeasible {
            columns: infeasible,
            reason: "more onsets required than candidate pitches".into(),
        });
    }

    let mut out = eps_hat.clone();
    let idx = |l: usize, h: usize| shape.index(ONSET, l, h);
    for l in 0..shape.length {
        let spec = mask.rhythm_at(l);
        if spec == RhythmConstraint::Unconstrained {
            continue;
        }
        let data = out.data_mut();
        let x = x_t.data();
        let p = |data: &[S], h: usize| c.x0(x[idx(l, h)], data[idx(l, h)]);
        let force_on = |data: &mut [S], h: usize| {
            let i = idx(l, h);
            if c.x0(x[i], data[i]) < half() {
                data[i] = data[i].min(c.bound(x[i], on));
            }
        };
        match spec {
            RhythmConstraint::Unconstrained => {}
            RhythmConstraint::NoneAllowed => {
                for h in 0..shape.pitches {
                    let i = idx(l, h);
                    data[i] = data[i].max(c.bound(x[i], off));
                }
            }
            RhythmConstraint::AtLeast(n) => {
                let cand = candidates(l);
                let have = cand.iter().filter(|&&h| p(data, h) >= half()).count();
                if have < n {
                    let mut below: Vec<(S, usize)> =
                        cand.iter().map(|&h| (p(data, h), h)).filter(|&(v, _)| v < half()).collect();
                    // largest p first; lower pitch wins ties
                    below.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite").then(a.1.cmp(&b.1)));
                    for &(_, h) in below.iter().take(n - have) {
                        force_on(data, h);
                    }
                }
            }
            RhythmConstraint::Exactly(n) => {
                let cand = candidates(l);
                let mut ranked: Vec<(S, usize)> = cand
                    .iter()
                    .map(|&h| {
                        let v = p(data, h);
                        (on_cost(v, kappa) - off_cost(v, kappa), h)
                    })
                    .collect();
                ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
                let mut selected = vec![false; shape.pitches];
                for &(_, h) in ranked.iter().take(n) {
                    selected[h] = true;
                }
                for h in 0..shape.pitches {
                    if selected[h] {
                        force_on(data, h);
                    } else {
                        let i = idx(l, h);
                        data[i] = data[i].max(c.bound(x[i], off));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Which corrections the sampler applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Correction {
    None,
    Harmonic,
    Rhythm,
    Joint,
}

impl Correction {
    pub fn from_flags(harmonic: bool, rhythm: bool) -> Self {
        match (harmonic, rhythm) {
            (false, false) => Correction::None,
            (true, false) => Correction::Harmonic,
            (false, true) => Correction::Rhythm,
            (true, true) => Correction::Joint,
        }
    }

    pub fn apply<S: Scalar>(
        self,
        eps_hat: &LatentRoll<S>,
        x_t: &LatentRoll<S>,
        t: usize,
        mask: &ConstraintMask,
        kappa: S,
        sched: &NoiseSchedule<S>,
    ) -> Result<LatentRoll<S>> {
        match self {
            Correction::None => Ok(eps_hat.clone()),
            Correction::Harmonic => correct_harmonic(eps_hat, x_t, t, mask, kappa, sched),
            Correction::Rhythm => correct_rhythm(eps_hat, x_t, t, mask, kappa, sched),
            Correction::Joint => correct_joint(eps_hat, x_t, t, mask, kappa, sched),
        }
    }
}
