mod common;

use common::*;
use ftg_core::diffusion::{oracle_epsilon, GaussianOracleDenoiser, NoiseSchedule, ToyConfig, ToyDenoiser};
use ftg_core::guidance::{
    cfg_combine, ddim_timesteps, reverse_step, sample, sample_traced, Conditions, GuidanceConfig, SamplerPlan,
};
use ftg_core::midi::{synth_corpus, CorpusSpec};
use ftg_core::pianoroll::{LatentRoll, Shape};
use ftg_core::theory::{ChordProgression, ConstraintMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn plain_conditions(length: usize, pitches: usize) -> Conditions<f64> {
    Conditions::new(
        &ChordProgression::from_steps(vec![None; length]),
        None,
        None,
        ConstraintMask::empty(length, pitches),
    )
    .unwrap()
}

fn oracle(shape: Shape, seed: u64, sched: &NoiseSchedule<f64>) -> GaussianOracleDenoiser<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mu = (0..shape.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let var = (0..shape.numel()).map(|_| rng.random_range(0.25..1.0)).collect();
    GaussianOracleDenoiser::new(shape, mu, var, sched.clone()).unwrap()
}

/// Variance ratio after the deterministic reverse pass with the exact ε for
/// `N(μ, v)` data: every step is affine in `x_t` with slope
/// `√ᾱ_prev·(1 − √(1−ᾱ)·c)/√ᾱ + √(1−ᾱ_prev)·c`, `c = √(1−ᾱ)/(ᾱv + 1 − ᾱ)`,
/// starting from unit variance.
fn deterministic_variance_ratio(steps: &[usize], v: f64, sched: &NoiseSchedule<f64>) -> f64 {
    let mut var = 1.0;
    for i in (0..steps.len()).rev() {
        let t = steps[i];
        let prev = if i == 0 { 0 } else { steps[i - 1] };
        let (a, ap) = (sched.alpha_bar(t), sched.alpha_bar(prev));
        let c = (1.0 - a).sqrt() / (a * v + 1.0 - a);
        let slope = ap.sqrt() * (1.0 - (1.0 - a).sqrt() * c) / a.sqrt() + (1.0 - ap).sqrt() * c;
        var *= slope * slope;
    }
    var / v
}

#[test]
fn ten_step_variance_matches_the_analytic_contraction() {
    let sched = default_schedule();
    let shape = Shape::roll(2, 4);
    let den = oracle(shape, 3, &sched);
    let conds = plain_conditions(2, 4);
    let plan = SamplerPlan::default();
    let n = 2000;
    let mut sum = vec![0.0; shape.numel()];
    let mut sq = vec![0.0; shape.numel()];
    for seed in 0..n {
        let out = sample(&den, &conds, &GuidanceConfig::unguided(), &plan, &sched, seed).unwrap();
        for (i, v) in out.latent.data().iter().enumerate() {
            sum[i] += v;
            sq[i] += v * v;
        }
    }
    let steps = ddim_timesteps(10, 1000);
    for i in 0..shape.numel() {
        let mean = sum[i] / n as f64;
        let var = (sq[i] - n as f64 * mean * mean) / (n - 1) as f64;
        let v = den.variance()[i];
        let predicted = deterministic_variance_ratio(&steps, v, &sched);
        let measured = var / v;
        assert!((measured / predicted - 1.0).abs() < 0.15, "cell {i}: measured {measured}, predicted {predicted}");
        assert!((mean - den.mean()[i]).abs() < 5.0 * (v / n as f64).sqrt());
    }
}

/// With unit-variance data each deterministic step rotates between noise
/// levels and scales the variance by `cos²` of the angle it covers. The angles
/// sum to `φ_T = arccos √ᾱ_T`, so ten steps keep at most `cos²(φ_T/10)^10`.
#[test]
fn ten_deterministic_steps_cannot_keep_unit_variance() {
    let sched = default_schedule();
    let ratio = deterministic_variance_ratio(&ddim_timesteps(10, 1000), 1.0, &sched);
    let phi = |t: usize| sched.alpha_bar(t).sqrt().acos();
    let steps = ddim_timesteps(10, 1000);
    let mut product = 1.0;
    for i in (0..steps.len()).rev() {
        let prev = if i == 0 { 0 } else { steps[i - 1] };
        product *= (phi(steps[i]) - phi(prev)).cos().powi(2);
    }
    assert!((ratio - product).abs() < 1e-12, "{ratio} vs {product}");
    let best = (phi(1000) / 10.0).cos().powi(20);
    assert!(ratio <= best && best < 0.8, "{ratio} {best}");
}

#[test]
fn full_grid_ddim_reproduces_ddpm_with_a_learned_model() {
    let sched = default_schedule();
    let piece = &synth_corpus(&CorpusSpec { pieces: 1, measures: 1, ..CorpusSpec::default() }).unwrap()[0];
    let model = ToyDenoiser::<f64>::new(ToyConfig { width: 4, embed_dim: 8, seed: 1 }).unwrap();
    let conds = piece_conditions(piece, true);
    let g = GuidanceConfig { w: Some(0.7), ..GuidanceConfig::default() };
    let full = SamplerPlan::Ddim { steps: (1..=1000).collect(), eta: 1.0 };
    let (a, ta) = sample_traced(&model, &conds, &g, &SamplerPlan::Ddpm, &sched, 9).unwrap();
    let (b, tb) = sample_traced(&model, &conds, &g, &full, &sched, 9).unwrap();
    assert_eq!(ta.len(), 1000);
    assert_eq!(ta, tb);
    assert_eq!(a, b);
}

#[test]
fn same_seed_same_output() {
    let sched = default_schedule();
    let shape = Shape::roll(4, 8);
    let den = oracle(shape, 1, &sched);
    let conds = plain_conditions(4, 8);
    let plan = SamplerPlan::ddim(10, 1000, 0.5);
    let g = GuidanceConfig::unguided();
    let a = sample(&den, &conds, &g, &plan, &sched, 42).unwrap();
    let b = sample(&den, &conds, &g, &plan, &sched, 42).unwrap();
    let c = sample(&den, &conds, &g, &plan, &sched, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.latent, c.latent);
}

#[test]
fn guidance_weight_endpoints_are_exact() {
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let shape = Shape::roll(3, 5);
    let c = normal_roll(shape, &mut rng);
    let r = normal_roll(shape, &mut rng);
    assert_eq!(cfg_combine(&c, &r, 0.0).unwrap(), c);
    assert_eq!(cfg_combine(&c, &r, 1.0).unwrap(), r);
    let mid = cfg_combine(&c, &r, 0.25).unwrap();
    for i in 0..shape.numel() {
        assert!((mid.data()[i] - (0.75 * c.data()[i] + 0.25 * r.data()[i])).abs() < 1e-15);
    }
    // w = 2 extrapolates past the rhythm prediction
    let far = cfg_combine(&c, &r, 2.0).unwrap();
    assert!((far.data()[0] - (2.0 * r.data()[0] - c.data()[0])).abs() < 1e-14);
}

#[test]
fn guidance_weight_selects_the_prediction() {
    let sched = default_schedule();
    let piece = &synth_corpus(&CorpusSpec { pieces: 1, measures: 1, ..CorpusSpec::default() }).unwrap()[0];
    let model = ToyDenoiser::<f64>::new(ToyConfig { width: 4, embed_dim: 8, seed: 2 }).unwrap();
    let with_rhythm = piece_conditions(piece, false);
    let mut chord_only = with_rhythm.clone();
    chord_only.chord_rhythm = None;
    let plan = SamplerPlan::default();
    let run = |conds: &Conditions<f64>, w: Option<f64>| {
        sample(&model, conds, &GuidanceConfig { w, ..GuidanceConfig::unguided() }, &plan, &sched, 4).unwrap()
    };
    assert_eq!(run(&with_rhythm, Some(0.0)), run(&chord_only, None));
    assert_eq!(run(&with_rhythm, None), run(&with_rhythm, Some(1.0)));
    assert_ne!(run(&with_rhythm, Some(0.5)).latent, run(&with_rhythm, Some(1.0)).latent);
}

#[test]
fn oracle_noise_is_the_scaled_score() {
    let sched = default_schedule();
    let shape = Shape::new(1, 1, 3);
    let mu = vec![0.3, -0.7, 1.1];
    let var = vec![0.2, 0.9, 0.5];
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for t in [1, 50, 400, 1000] {
        let x = normal_roll(shape, &mut rng);
        let eps = oracle_epsilon(&x, t, &sched, &mu, &var).unwrap();
        let a = sched.alpha_bar(t);
        for i in 0..3 {
            // ε* = −√(1−ᾱ)·∂/∂x log p_t(x), p_t = N(√ᾱ·μ, ᾱv + 1 − ᾱ)
            let m = a.sqrt() * mu[i];
            let s2 = a * var[i] + 1.0 - a;
            let log_p = |y: f64| -0.5 * (y - m) * (y - m) / s2;
            let h = 1e-5;
            let score = (log_p(x.data()[i] + h) - log_p(x.data()[i] - h)) / (2.0 * h);
            let want = -(1.0 - a).sqrt() * score;
            assert!((eps.data()[i] - want).abs() < 1e-7, "t={t} cell {i}: {} vs {want}", eps.data()[i]);
        }
    }
}

#[test]
fn last_step_lands_on_the_prediction() {
    let sched = default_schedule();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let shape = Shape::roll(2, 3);
    let x = normal_roll(shape, &mut rng);
    let eps = normal_roll(shape, &mut rng);
    let noise = normal_roll(shape, &mut rng);
    let out = reverse_step(&x, &eps, 1, 0, 0.0, &sched, &noise).unwrap();
    let (s, r) = coeffs(&sched, 1);
    for i in 0..shape.numel() {
        assert!((out.data()[i] - (x.data()[i] - r * eps.data()[i]) / s).abs() < 1e-12);
    }
    assert!(reverse_step(&x, &eps, 3, 3, 0.0, &sched, &noise).is_err());
}

#[test]
fn invalid_plans_are_rejected() {
    let sched = default_schedule();
    let shape = Shape::roll(2, 3);
    let den = oracle(shape, 0, &sched);
    let conds = plain_conditions(2, 3);
    let g = GuidanceConfig::unguided();
    for plan in [
        SamplerPlan::Ddim { steps: vec![], eta: 0.0 },
        SamplerPlan::Ddim { steps: vec![5, 5], eta: 0.0 },
        SamplerPlan::Ddim { steps: vec![10, 1001], eta: 0.0 },
        SamplerPlan::Ddim { steps: vec![10], eta: 1.5 },
    ] {
        assert!(sample(&den, &conds, &g, &plan, &sched, 0).is_err(), "{plan:?}");
    }
    let bad = GuidanceConfig { kappa: 0.0, ..GuidanceConfig::default() };
    assert!(sample(&den, &conds, &bad, &SamplerPlan::default(), &sched, 0).is_err());
}

#[test]
fn single_precision_sampling_tracks_double() {
    let sched64 = default_schedule();
    let sched32 = ftg_core::diffusion::linear_schedule::<f32>(1000, 8.5e-4, 1.2e-2, 1.0).unwrap();
    let shape = Shape::roll(2, 4);
    let d64 = oracle(shape, 6, &sched64);
    let mu: Vec<f32> = d64.mean().iter().map(|&v| v as f32).collect();
    let var: Vec<f32> = d64.variance().iter().map(|&v| v as f32).collect();
    let d32 = GaussianOracleDenoiser::new(shape, mu, var, sched32.clone()).unwrap();
    let c64 = plain_conditions(2, 4);
    let c32 = Conditions::<f32>::new(&ChordProgression::from_steps(vec![None; 2]), None, None, ConstraintMask::empty(2, 4))
        .unwrap();
    let g = GuidanceConfig::unguided();
    let a = sample(&d64, &c64, &g, &SamplerPlan::default(), &sched64, 3).unwrap();
    let b = sample(&d32, &c32, &g, &SamplerPlan::default(), &sched32, 3).unwrap();
    let b64: LatentRoll<f64> = b.latent.cast();
    assert!(a.latent.max_abs_diff(&b64) < 1e-4);
}
