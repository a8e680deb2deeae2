mod common;

use common::*;
use ftg_core::guidance::{correct_harmonic, correct_joint, correct_rhythm, predict_x0, Correction};
use ftg_core::pianoroll::{LatentRoll, Shape, ONSET, ROLL_CHANNELS};
use ftg_core::theory::{ConstraintMask, RhythmConstraint};
use ftg_core::FtgError;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const KAPPA: f64 = 1e-6;

fn instance(seed: u64) -> (Shape, usize, LatentRoll<f64>, LatentRoll<f64>, ChaCha20Rng) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let shape = Shape::roll(rng.random_range(1..=6), rng.random_range(1..=10));
    let t = rng.random_range(1..=1000);
    let x_t = normal_roll(shape, &mut rng);
    let eps = normal_roll(shape, &mut rng);
    (shape, t, x_t, eps, rng)
}

fn random_specs(length: usize, pitches: usize, grid: &[bool], in_key_only: bool, rng: &mut impl Rng) -> Vec<RhythmConstraint> {
    (0..length)
        .map(|l| {
            let cands = (0..pitches).filter(|&h| !in_key_only || !grid[l * pitches + h]).count();
            match rng.random_range(0..4) {
                0 if cands > 0 => RhythmConstraint::Exactly(rng.random_range(1..=cands)),
                1 if cands > 0 => RhythmConstraint::AtLeast(rng.random_range(1..=cands)),
                2 => RhythmConstraint::NoneAllowed,
                _ => RhythmConstraint::Unconstrained,
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn harmonic_output_is_feasible_and_idempotent(seed in any::<u64>()) {
        let (shape, t, x_t, eps, mut rng) = instance(seed);
        let sched = default_schedule();
        let grid = random_mask(shape.length, shape.pitches, 0.5, &mut rng);
        let mask = ConstraintMask::from_grid(shape.length, shape.pitches, grid, vec![RhythmConstraint::Unconstrained; shape.length], false).unwrap();
        let once = correct_harmonic(&eps, &x_t, t, &mask, KAPPA, &sched).unwrap();
        let twice = correct_harmonic(&once, &x_t, t, &mask, KAPPA, &sched).unwrap();
        prop_assert_eq!(&once, &twice);
        let x0 = predict_x0(&x_t, &once, t, &sched).unwrap();
        for c in 0..ROLL_CHANNELS {
            for l in 0..shape.length {
                for h in 0..shape.pitches {
                    let i = shape.index(c, l, h);
                    if mask.is_out_of_key(l, h) {
                        prop_assert!(x0.data()[i] < 0.5);
                    } else {
                        prop_assert_eq!(once.data()[i], eps.data()[i]);
                    }
                }
            }
        }
    }

    #[test]
    fn harmonic_is_the_nearest_feasible_point(seed in any::<u64>()) {
        let (_, t, _, _, mut rng) = instance(seed);
        let shape = Shape::roll(4, 8);
        let sched = default_schedule();
        let x_t = normal_roll(shape, &mut rng);
        let eps = normal_roll(shape, &mut rng);
        let mask = ConstraintMask::from_grid(4, 8, random_mask(4, 8, 0.8, &mut rng), vec![RhythmConstraint::Unconstrained; 4], false).unwrap();
        let got = correct_harmonic(&eps, &x_t, t, &mask, KAPPA, &sched).unwrap();
        let (s, r) = coeffs(&sched, t);
        let want = hildreth(eps.data(), &upper_bound_rows(&x_t, &masked_cells(&mask), 0.5 - KAPPA, s, r), 0.0, 1000);
        for (a, b) in got.data().iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
        }
        // any other feasible point is at least as far from ε̂
        let other = correct_harmonic(&normal_roll(shape, &mut rng), &x_t, t, &mask, KAPPA, &sched).unwrap();
        prop_assert!(got.distance(&eps) <= other.distance(&eps) + 1e-12);
    }

    #[test]
    fn rhythm_output_meets_every_column(seed in any::<u64>(), in_key_only in any::<bool>()) {
        let (shape, t, x_t, eps, mut rng) = instance(seed);
        let sched = default_schedule();
        let grid = random_mask(shape.length, shape.pitches, 0.3, &mut rng);
        let specs = random_specs(shape.length, shape.pitches, &grid, in_key_only, &mut rng);
        let mask = ConstraintMask::from_grid(shape.length, shape.pitches, grid, specs.clone(), in_key_only).unwrap();
        let out = correct_rhythm(&eps, &x_t, t, &mask, KAPPA, &sched).unwrap();
        let again = correct_rhythm(&out, &x_t, t, &mask, KAPPA, &sched).unwrap();
        prop_assert_eq!(&out, &again);
        let x0 = predict_x0(&x_t, &out, t, &sched).unwrap();
        for (l, spec) in specs.iter().enumerate() {
            let on = (0..shape.pitches)
                .filter(|&h| x0.get(ONSET, l, h) >= 0.5)
                .filter(|&h| !in_key_only || !mask.is_out_of_key(l, h) || !matches!(spec, RhythmConstraint::AtLeast(_)))
                .count();
            prop_assert!(spec.is_satisfied_by(on), "column {} spec {:?} onsets {}", l, spec, on);
        }
    }

    #[test]
    fn joint_meets_both_constraints(seed in any::<u64>()) {
        let (shape, t, x_t, eps, mut rng) = instance(seed);
        let sched = default_schedule();
        let grid = random_mask(shape.length, shape.pitches, 0.3, &mut rng);
        let specs = random_specs(shape.length, shape.pitches, &grid, true, &mut rng);
        let mask = ConstraintMask::from_grid(shape.length, shape.pitches, grid, specs.clone(), true).unwrap();
        let out = correct_joint(&eps, &x_t, t, &mask, KAPPA, &sched).unwrap();
        let x0 = predict_x0(&x_t, &out, t, &sched).unwrap();
        for l in 0..shape.length {
            let mut on = 0;
            for h in 0..shape.pitches {
                if mask.is_out_of_key(l, h) {
                    prop_assert!(x0.get(ONSET, l, h) < 0.5);
                    prop_assert!(x0.get(1, l, h) < 0.5);
                }
                on += usize::from(x0.get(ONSET, l, h) >= 0.5);
            }
            prop_assert!(specs[l].is_satisfied_by(on));
        }
        prop_assert_eq!(Correction::Joint.apply(&eps, &x_t, t, &mask, KAPPA, &sched).unwrap(), out);
    }

    #[test]
    fn convex_corrections_do_not_expand(seed in any::<u64>()) {
        let (shape, t, x_t, _, mut rng) = instance(seed);
        let sched = default_schedule();
        let grid = random_mask(shape.length, shape.pitches, 0.4, &mut rng);
        let rhythm = (0..shape.length).map(|_| if rng.random_bool(0.5) { RhythmConstraint::NoneAllowed } else { RhythmConstraint::Unconstrained }).collect();
        let mask = ConstraintMask::from_grid(shape.length, shape.pitches, grid, rhythm, true).unwrap();
        let a = normal_roll(shape, &mut rng);
        let b = normal_roll(shape, &mut rng);
        for f in [correct_harmonic::<f64>, correct_rhythm::<f64>, correct_joint::<f64>] {
            let pa = f(&a, &x_t, t, &mask, KAPPA, &sched).unwrap();
            let pb = f(&b, &x_t, t, &mask, KAPPA, &sched).unwrap();
            prop_assert!(pa.distance(&pb) <= a.distance(&b) + 1e-12);
        }
    }
}

#[test]
fn rhythm_selection_matches_enumeration() {
    let sched = default_schedule();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    for _ in 0..300 {
        let (length, pitches) = (rng.random_range(1..=4), rng.random_range(1..=10));
        let shape = Shape::roll(length, pitches);
        let t = rng.random_range(1..=1000);
        let grid = random_mask(length, pitches, 0.3, &mut rng);
        let in_key_only = rng.random_bool(0.5);
        let specs = random_specs(length, pitches, &grid, in_key_only, &mut rng);
        let mask = ConstraintMask::from_grid(length, pitches, grid.clone(), specs.clone(), in_key_only).unwrap();
        let x_t = normal_roll(shape, &mut rng);
        let eps = normal_roll(shape, &mut rng).map(|v| 0.3 * v);
        let out = correct_rhythm(&eps, &x_t, t, &mask, KAPPA, &sched).unwrap();
        let (s, r) = coeffs(&sched, t);
        for (l, &spec) in specs.iter().enumerate() {
            let idx = onset_column(shape, l);
            let col: Vec<f64> = idx.iter().map(|&i| eps.data()[i]).collect();
            let xs: Vec<f64> = idx.iter().map(|&i| x_t.data()[i]).collect();
            let got: Vec<f64> = idx.iter().map(|&i| out.data()[i]).collect();
            if spec == RhythmConstraint::Unconstrained {
                assert_eq!(got, col);
                continue;
            }
            let cands: Vec<usize> = (0..pitches).filter(|&h| !in_key_only || !grid[l * pitches + h]).collect();
            assert_eq!(got, enumerate_column(&col, &xs, &cands, spec, KAPPA, s, r), "column {l} {spec:?}");
        }
    }
}

/// Selecting exactly one onset is not a convex constraint, so the correction
/// can move two inputs further apart.
#[test]
fn exactly_one_is_not_nonexpansive() {
    let sched = default_schedule();
    let t = 500;
    let shape = Shape::roll(1, 2);
    let mask = ConstraintMask::from_grid(1, 2, vec![false; 2], vec![RhythmConstraint::Exactly(1)], false).unwrap();
    let x_t = LatentRoll::zeros(shape);
    let (s, r) = coeffs(&sched, t);
    // ε for a predicted clean value p at x_t = 0
    let at = |p0: f64, p1: f64| {
        let mut e = LatentRoll::zeros(shape);
        e.set(ONSET, 0, 0, -s * p0 / r);
        e.set(ONSET, 0, 1, -s * p1 / r);
        e
    };
    // both pitches on and nearly tied: each input keeps a different one
    let a = at(0.6, 0.61);
    let b = at(0.61, 0.6);
    let pa = correct_rhythm(&a, &x_t, t, &mask, KAPPA, &sched).unwrap();
    let pb = correct_rhythm(&b, &x_t, t, &mask, KAPPA, &sched).unwrap();
    assert!(pa.distance(&pb) > a.distance(&b));
}

#[test]
fn infeasible_columns_are_all_reported() {
    let sched = default_schedule();
    let shape = Shape::roll(3, 4);
    let mut grid = vec![false; 12];
    // column 0: one in-key pitch; column 2: none
    grid[..3].fill(true);
    grid[8..12].fill(true);
    let specs = vec![RhythmConstraint::AtLeast(2), RhythmConstraint::Exactly(4), RhythmConstraint::Exactly(1)];
    let mask = ConstraintMask::from_grid(3, 4, grid, specs, true).unwrap();
    let z = LatentRoll::zeros(shape);
    match correct_rhythm(&z, &z, 10, &mask, KAPPA, &sched) {
        Err(FtgError::Infeasible { columns, .. }) => assert_eq!(columns, vec![0, 2]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn correction_selection() {
    assert_eq!(Correction::from_flags(true, true), Correction::Joint);
    assert_eq!(Correction::from_flags(true, false), Correction::Harmonic);
    assert_eq!(Correction::from_flags(false, true), Correction::Rhythm);
    assert_eq!(Correction::from_flags(false, false), Correction::None);
}
