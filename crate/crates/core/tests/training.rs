mod common;

use common::*;
use ftg_core::diffusion::{
    train, training_step, AdamW, AdamWConfig, Checkpoint, Denoiser, ScheduleConfig, ToyConfig, ToyDenoiser,
    TrainConfig, Trainable,
};
use ftg_core::midi::{synth_corpus, CorpusSpec};
use ftg_core::pianoroll::{build_condition_cr, concat_model_input};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn small_corpus(pieces: usize, seed: u64) -> Vec<ftg_core::diffusion::TrainingExample<f64>> {
    let spec = CorpusSpec { pieces, measures: 1, seed, ..CorpusSpec::default() };
    synth_corpus(&spec).unwrap().iter().map(example).collect()
}

#[test]
fn matching_target_gives_zero_loss_and_gradient() {
    let data = small_corpus(1, 0);
    let ex = &data[0];
    let model = ToyDenoiser::<f64>::new(ToyConfig { width: 4, embed_dim: 8, seed: 3 }).unwrap();
    let cond = build_condition_cr(&ex.chords, &ex.rhythm, 128).unwrap();
    let input = concat_model_input(&ex.x0, &cond, ex.melody.as_ref()).unwrap();
    let target = model.predict(&input, 300).unwrap();
    let mut grads = vec![0.0; model.param_count()];
    let loss = model.loss_and_grad(&input, 300, &target, 1.0, &mut grads).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grads.iter().all(|&g| g == 0.0));
}

#[test]
fn zero_model_loss_is_the_noise_variance() {
    let data = small_corpus(16, 1);
    let config = TrainConfig {
        optimizer: AdamWConfig { learning_rate: 0.0, weight_decay: 0.0, ..AdamWConfig::default() },
        ..TrainConfig::default()
    };
    let cfg = ToyConfig { width: 4, embed_dim: 8, seed: 0 };
    let n = ToyDenoiser::<f64>::new(cfg.clone()).unwrap().param_count();
    let mut model = ToyDenoiser::<f64>::from_params(cfg, vec![0.0; n]).unwrap();
    let mut opt = AdamW::new(config.optimizer.clone(), n);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let sched = default_schedule();
    let stats = training_step(&mut model, &mut opt, &data, &config, &sched, &mut rng).unwrap();
    // mean of 16 × 2 × 16 × 128 squared standard normals
    let sd = (2.0 / (16.0 * 2.0 * 16.0 * 128.0f64)).sqrt();
    assert!((stats.loss - 1.0).abs() < 5.0 * sd, "{}", stats.loss);
}

#[test]
fn dropout_counters_follow_the_probability() {
    let data = small_corpus(16, 2);
    let sched = default_schedule();
    let cfg = ToyConfig { width: 2, embed_dim: 4, seed: 0 };
    let count = |p_drop: f64| {
        let mut model = ToyDenoiser::<f64>::new(cfg.clone()).unwrap();
        let config = TrainConfig { epochs: 4, p_drop, ..TrainConfig::default() };
        let r = train(&mut model, &data, &config, &sched, |_| {}).unwrap();
        (r.n_chord_only, r.n_chord_rhythm)
    };
    assert_eq!(count(0.0), (0, 64));
    assert_eq!(count(1.0), (64, 0));
    let (c, cr) = count(0.5);
    assert_eq!(c + cr, 64);
    assert!((16..=48).contains(&c), "{c}");
}

#[test]
fn two_hundred_steps_lower_the_loss() {
    let data = small_corpus(16, 3);
    let sched = default_schedule();
    let config = TrainConfig {
        optimizer: AdamWConfig { learning_rate: 1e-3, ..AdamWConfig::default() },
        ..TrainConfig::default()
    };
    let mut model = ToyDenoiser::<f64>::new(ToyConfig::default()).unwrap();
    let mut opt = AdamW::new(config.optimizer.clone(), model.param_count());
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let losses: Vec<f64> = (0..200)
        .map(|_| training_step(&mut model, &mut opt, &data, &config, &sched, &mut rng).unwrap().loss)
        .collect();
    let lead: f64 = losses[..20].iter().sum::<f64>() / 20.0;
    let trail: f64 = losses[180..].iter().sum::<f64>() / 20.0;
    assert!(trail < lead, "leading {lead}, trailing {trail}");
}

#[test]
fn epochs_are_reported_in_order() {
    let data = small_corpus(5, 4);
    let sched = default_schedule();
    let mut model = ToyDenoiser::<f64>::new(ToyConfig { width: 2, embed_dim: 4, seed: 0 }).unwrap();
    let config = TrainConfig { epochs: 3, batch_size: 2, ..TrainConfig::default() };
    let mut seen = Vec::new();
    let report = train(&mut model, &data, &config, &sched, |e| seen.push(e.epoch)).unwrap();
    assert_eq!(seen, vec![0, 1, 2]);
    assert!(report.epochs.iter().all(|e| e.steps == 3 && e.mean_loss.is_finite()));
}

#[test]
fn training_is_reproducible() {
    let data = small_corpus(4, 5);
    let sched = default_schedule();
    let run = || {
        let mut model = ToyDenoiser::<f64>::new(ToyConfig { width: 2, embed_dim: 4, seed: 1 }).unwrap();
        let config = TrainConfig { epochs: 2, batch_size: 2, seed: 8, ..TrainConfig::default() };
        train(&mut model, &data, &config, &sched, |_| {}).unwrap();
        model
    };
    assert_eq!(run(), run());
}

#[test]
fn bad_configurations_are_rejected() {
    let data = small_corpus(2, 6);
    let sched = default_schedule();
    let mut model = ToyDenoiser::<f64>::new(ToyConfig { width: 2, embed_dim: 4, seed: 0 }).unwrap();
    for config in [
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { p_drop: 1.5, ..TrainConfig::default() },
    ] {
        assert!(train(&mut model, &data, &config, &sched, |_| {}).is_err());
    }
    assert!(train(&mut model, &[], &TrainConfig::default(), &sched, |_| {}).is_err());
}

#[test]
fn checkpoint_survives_a_file_round_trip() {
    let data = small_corpus(2, 7);
    let mut model = ToyDenoiser::<f32>::new(ToyConfig { width: 3, embed_dim: 4, seed: 2 }).unwrap();
    let data32: Vec<_> = data
        .iter()
        .map(|e| ftg_core::diffusion::TrainingExample {
            x0: e.x0.cast::<f32>(),
            chords: e.chords.clone(),
            rhythm: e.rhythm.clone(),
            melody: e.melody.clone(),
        })
        .collect();
    let sched32 = ScheduleConfig::default().build::<f32>().unwrap();
    train(&mut model, &data32, &TrainConfig { epochs: 1, ..TrainConfig::default() }, &sched32, |_| {}).unwrap();
    let ck = Checkpoint { schedule: ScheduleConfig::default(), model };
    let path = std::env::temp_dir().join(format!("ftg-ck-{}.ftgc", std::process::id()));
    ck.save(&path).unwrap();
    let back = Checkpoint::<f32>::load(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert_eq!(back, ck);

    let mut bytes = ck.to_bytes();
    bytes.push(0);
    assert!(Checkpoint::<f32>::from_bytes(&bytes).is_err());
    bytes.truncate(bytes.len() - 5);
    assert!(Checkpoint::<f32>::from_bytes(&bytes).is_err());
    let mut bad = ck.to_bytes();
    bad[0] = b'X';
    assert!(Checkpoint::<f32>::from_bytes(&bad).is_err());
}
