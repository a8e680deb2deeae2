#![allow(dead_code)]

use ftg_core::diffusion::{linear_schedule, NoiseSchedule, TrainingExample};
use ftg_core::guidance::Conditions;
use ftg_core::midi::CorpusPiece;
use ftg_core::pianoroll::{LatentRoll, Shape, ONSET, ROLL_CHANNELS};
use ftg_core::theory::{build_constraint_mask, strict_constraints, ConstraintMask, MaskOptions, RhythmConstraint};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn default_schedule() -> NoiseSchedule<f64> {
    linear_schedule(1000, 8.5e-4, 1.2e-2, 1.0).unwrap()
}

pub fn example(piece: &CorpusPiece) -> TrainingExample<f64> {
    TrainingExample {
        x0: piece.accompaniment.to_latent(),
        chords: piece.chords.clone(),
        rhythm: piece.rhythm.clone(),
        melody: Some(piece.melody.clone()),
    }
}

/// Key mask for the piece, with the strict rhythm constraints when `rhythm` is set.
pub fn piece_mask(piece: &CorpusPiece, rhythm: bool) -> ConstraintMask {
    let specs = if rhythm {
        strict_constraints(&piece.rhythm)
    } else {
        vec![RhythmConstraint::Unconstrained; piece.keys.len()]
    };
    build_constraint_mask(&piece.keys, &specs, &MaskOptions::default()).unwrap()
}

pub fn piece_conditions(piece: &CorpusPiece, rhythm_constraints: bool) -> Conditions<f64> {
    Conditions::new(
        &piece.chords,
        Some(&piece.rhythm),
        Some(piece.melody.clone()),
        piece_mask(piece, rhythm_constraints),
    )
    .unwrap()
}

pub fn normal_roll(shape: Shape, rng: &mut impl Rng) -> LatentRoll<f64> {
    let data = (0..shape.numel()).map(|_| StandardNormal.sample(&mut *rng)).collect();
    LatentRoll::from_vec(shape, data).unwrap()
}

pub fn random_mask(length: usize, pitches: usize, density: f64, rng: &mut impl Rng) -> Vec<bool> {
    (0..length * pitches).map(|_| rng.random_bool(density)).collect()
}

/// `√ᾱ`, `√(1−ᾱ)` at `t`.
pub fn coeffs(sched: &NoiseSchedule<f64>, t: usize) -> (f64, f64) {
    let a = sched.alpha_bar(t);
    (a.sqrt(), (1.0 - a).sqrt())
}

/// One linear inequality `g·ε ≤ h` over the flattened latent.
pub struct Halfspace {
    pub g: Vec<f64>,
    pub h: f64,
}

/// Halfspaces `x0(ε)_i ≤ q` for each listed cell, written densely: with
/// `x0 = (x − rε)/s`, the row is `−(r/s)·e_i` and the bound `q − x_i/s`.
pub fn upper_bound_rows(x_t: &LatentRoll<f64>, cells: &[usize], q: f64, s: f64, r: f64) -> Vec<Halfspace> {
    let n = x_t.data().len();
    cells
        .iter()
        .map(|&i| {
            let mut g = vec![0.0; n];
            g[i] = -r / s;
            Halfspace { g, h: q - x_t.data()[i] / s }
        })
        .collect()
}

/// Hildreth's dual coordinate ascent for `min ½‖ε − ε̂‖²` subject to `Gε ≤ h`.
pub fn hildreth(eps_hat: &[f64], rows: &[Halfspace], tol: f64, max_sweeps: usize) -> Vec<f64> {
    let mut lambda = vec![0.0; rows.len()];
    let mut z = eps_hat.to_vec();
    for _ in 0..max_sweeps {
        let mut change: f64 = 0.0;
        for (k, row) in rows.iter().enumerate() {
            let gz: f64 = row.g.iter().zip(&z).map(|(a, b)| a * b).sum();
            let gg: f64 = row.g.iter().map(|a| a * a).sum();
            let next = (lambda[k] + (gz - row.h) / gg).max(0.0);
            let d = next - lambda[k];
            if d != 0.0 {
                for (zi, gi) in z.iter_mut().zip(&row.g) {
                    *zi -= d * gi;
                }
                lambda[k] = next;
                change = change.max(d.abs());
            }
        }
        if change <= tol {
            break;
        }
    }
    z
}

/// Flat indices of masked cells on both channels.
pub fn masked_cells(mask: &ConstraintMask) -> Vec<usize> {
    let shape = Shape::roll(mask.length(), mask.pitches());
    let mut out = Vec::new();
    for c in 0..ROLL_CHANNELS {
        for l in 0..shape.length {
            for h in 0..shape.pitches {
                if mask.is_out_of_key(l, h) {
                    out.push(shape.index(c, l, h));
                }
            }
        }
    }
    out
}

/// Flat onset-channel indices of a column.
pub fn onset_column(shape: Shape, l: usize) -> Vec<usize> {
    (0..shape.pitches).map(|h| shape.index(ONSET, l, h)).collect()
}

/// Minimum-distance onset column by enumerating every on-set over the
/// candidates. Cells in the on-set that already predict `≥ 1/2` stay put, the
/// rest move to `1/2 + κ`; for `Exactly` every other pitch is pushed to at most
/// `1/2 − κ`, for `AtLeast` it stays put and for `NoneAllowed` the on-set is
/// empty. Returns the corrected ε for the column's pitches.
pub fn enumerate_column(
    eps_hat: &[f64],
    x: &[f64],
    candidates: &[usize],
    spec: RhythmConstraint,
    kappa: f64,
    s: f64,
    r: f64,
) -> Vec<f64> {
    let pred = |i: usize| (x[i] - r * eps_hat[i]) / s;
    let bound = |i: usize, q: f64| (x[i] - s * q) / r;
    let k = candidates.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for bits in 0u32..(1 << k) {
        let chosen: Vec<usize> = (0..k).filter(|j| bits >> j & 1 == 1).map(|j| candidates[j]).collect();
        let ok = match spec {
            RhythmConstraint::Exactly(n) => chosen.len() == n,
            RhythmConstraint::AtLeast(n) => chosen.len() >= n,
            RhythmConstraint::NoneAllowed => chosen.is_empty(),
            RhythmConstraint::Unconstrained => true,
        };
        if !ok {
            continue;
        }
        let mut eps = eps_hat.to_vec();
        for i in 0..eps.len() {
            if chosen.contains(&i) {
                if pred(i) < 0.5 {
                    eps[i] = bound(i, 0.5 + kappa);
                }
            } else if matches!(spec, RhythmConstraint::Exactly(_) | RhythmConstraint::NoneAllowed)
                && pred(i) > 0.5 - kappa
            {
                eps[i] = bound(i, 0.5 - kappa);
            }
        }
        let cost: f64 = eps.iter().zip(eps_hat).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, eps));
        }
    }
    best.expect("at least one feasible on-set").1
}
