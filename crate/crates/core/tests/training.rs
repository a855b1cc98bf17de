mod common;

use std::fs;
use std::path::Path;

use common::*;
use meshstyle::losses::LossWeights;
use meshstyle::models::{Discriminator, ModelConfig};
use meshstyle::optim::{Adam, AdamConfig};
use meshstyle::training::{
    discriminator_gradients, generator_gradients, Sample, DIAGNOSTIC_JSON, FINAL_CHECKPOINT,
    LATEST_CHECKPOINT, LOSS_LOG, METRICS_LOG,
};
use meshstyle::{Dataset, Split, TrainConfig, TrainError, Trainer};
use ndarray::Array2;
use rand::Rng;

fn small_config(steps: u64) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 2,
        model: ModelConfig::scaled_down(16),
        generator_lr: 1e-3,
        discriminator_lr: 1e-3,
        checkpoint_every: 5,
        eval_every: 0,
        ..TrainConfig::default()
    }
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn same_seed_runs_write_identical_logs() {
    let data = desk_dataset();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    Trainer::new(small_config(8), &data).unwrap().fit(&data, Some(a.path())).unwrap();
    Trainer::new(small_config(8), &data).unwrap().fit(&data, Some(b.path())).unwrap();
    assert_eq!(read(&a.path().join(LOSS_LOG)), read(&b.path().join(LOSS_LOG)));
    assert_eq!(
        fs::read(a.path().join(FINAL_CHECKPOINT)).unwrap(),
        fs::read(b.path().join(FINAL_CHECKPOINT)).unwrap()
    );
    let other = TrainConfig { seed: 1, ..small_config(8) };
    let c = tempfile::tempdir().unwrap();
    Trainer::new(other, &data).unwrap().fit(&data, Some(c.path())).unwrap();
    assert_ne!(read(&a.path().join(LOSS_LOG)), read(&c.path().join(LOSS_LOG)));
}

#[test]
fn loss_log_has_one_row_per_step() {
    let data = desk_dataset();
    let dir = tempfile::tempdir().unwrap();
    let reports = Trainer::new(small_config(7), &data).unwrap().fit(&data, Some(dir.path())).unwrap();
    assert_eq!(reports.len(), 7);
    let log = read(&dir.path().join(LOSS_LOG));
    let rows: Vec<&str> = log.lines().collect();
    assert_eq!(rows[0], meshstyle::LossReport::CSV_HEADER);
    assert_eq!(rows.len(), 8);
    for (i, row) in rows[1..].iter().enumerate() {
        assert!(row.starts_with(&format!("{i},")));
    }
    assert!(dir.path().join("checkpoints/step_000005.ckpt").exists());
    assert!(dir.path().join(LATEST_CHECKPOINT).exists());
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let data = desk_dataset();
    let full = tempfile::tempdir().unwrap();
    let mut straight = Trainer::new(small_config(12), &data).unwrap();
    straight.fit(&data, Some(full.path())).unwrap();

    // stop after 10 steps, then resume from the step-5 checkpoint as if the
    // process had died; rows past step 5 must be discarded and replayed
    let split = tempfile::tempdir().unwrap();
    Trainer::new(small_config(10), &data).unwrap().fit(&data, Some(split.path())).unwrap();
    let mut resumed = Trainer::resume(&split.path().join("checkpoints/step_000005.ckpt"), &data).unwrap();
    assert_eq!(resumed.step(), 5);
    resumed.config.steps = 12;
    resumed.fit(&data, Some(split.path())).unwrap();

    assert_eq!(read(&full.path().join(LOSS_LOG)), read(&split.path().join(LOSS_LOG)));
    assert_eq!(straight.model, resumed.model);
    assert_eq!(straight.generator_opt, resumed.generator_opt);
    assert_eq!(straight.discriminator_opt, resumed.discriminator_opt);
}

#[test]
fn resume_next_step_is_bitwise_identical() {
    let data = desk_dataset();
    let mut a = Trainer::new(small_config(10), &data).unwrap();
    for _ in 0..3 {
        a.train_step(&data).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    a.save(&path).unwrap();
    let mut b = Trainer::<f32>::resume(&path, &data).unwrap();
    let ra = a.train_step(&data).unwrap();
    let rb = b.train_step(&data).unwrap();
    assert_eq!(ra.total.to_bits(), rb.total.to_bits());
    assert_eq!(a.model, b.model);
}

#[test]
fn updates_touch_only_their_own_parameters() {
    let data = desk_dataset();
    let mut t = Trainer::new(small_config(1), &data).unwrap();
    let before = t.model.clone();
    let pair = t.sample_batch(&data).unwrap();
    let samples: Vec<Sample<'_, f32>> = pair.iter().map(|p| Sample::from_pair(&data, p)).collect();

    let real: Vec<&Array2<f32>> = samples.iter().map(|s| s.ground_truth).collect();
    let fake: Vec<Array2<f32>> = samples
        .iter()
        .map(|s| t.model.generate(s.posed, s.identity).unwrap())
        .collect();
    let fake_refs: Vec<&Array2<f32>> = fake.iter().collect();
    let (_, dg) = discriminator_gradients(&t.model.discriminator, &real, &fake_refs).unwrap();
    t.discriminator_opt.step(&mut t.model.discriminator, &dg);
    assert_eq!(t.model.generator, before.generator);
    assert_ne!(t.model.discriminator, before.discriminator);

    let after_d = t.model.discriminator.clone();
    let (_, gg) = generator_gradients(&t.model, &samples, &data.template().edge_set(), &t.config).unwrap();
    t.generator_opt.step(&mut t.model.generator, &gg);
    assert_eq!(t.model.discriminator, after_d);
    assert_ne!(t.model.generator, before.generator);

    // without a discriminator a full step never moves it
    let off = TrainConfig { use_discriminator: false, ..small_config(3) };
    let mut t = Trainer::new(off, &data).unwrap();
    let d0 = t.model.discriminator.clone();
    for _ in 0..3 {
        let r = t.train_step(&data).unwrap();
        assert_eq!(r.disc, 0.0);
        assert_eq!(r.adver, 0.0);
    }
    assert_eq!(t.model.discriminator, d0);
}

#[test]
fn single_pair_reconstruction_decreases_monotonically() {
    let data = desk_dataset();
    let config = TrainConfig {
        use_discriminator: false,
        weights: LossWeights { adver: 0.0, ..LossWeights::default() },
        generator_lr: 1e-4,
        ..small_config(50)
    };
    let mut t = Trainer::new(config, &data).unwrap();
    let pair = vec![t.sample_batch(&data).unwrap()[0]];
    let recs: Vec<f64> = (0..50).map(|_| t.train_step_on(&data, &pair).unwrap().rec).collect();
    for w in recs.windows(2) {
        assert!(w[1] < w[0], "{recs:?}");
    }
}

#[test]
fn discriminator_separates_bodies_from_noise() {
    let data = desk_dataset();
    let cfg = ModelConfig::scaled_down(8);
    let mut r = rng(41);
    let mut d: Discriminator<f32> =
        Discriminator::init(cfg.discriminator_widths, cfg.discriminator_hidden, &mut r);
    let mut opt = Adam::new(AdamConfig::with_learning_rate(1e-3), &d);
    let cells = data.manifest().cells(Split::Train);
    let n = data.template().num_vertices();
    let noise = |r: &mut rand_chacha::ChaCha8Rng| {
        Array2::from_shape_fn((3, n), |_| r.random_range(-0.95f32..0.95))
    };
    let accuracy = |d: &Discriminator<f32>, r: &mut rand_chacha::ChaCha8Rng| {
        let mut correct = 0;
        for &cell in &cells {
            correct += (d.forward(data.coords(cell)).probability() > 0.5) as usize;
            correct += (d.forward(&noise(r)).probability() < 0.5) as usize;
        }
        correct as f64 / (2 * cells.len()) as f64
    };
    let mut reached = None;
    for step in 0..500 {
        let real: Vec<&Array2<f32>> = (0..4).map(|_| data.coords(cells[r.random_range(0..cells.len())])).collect();
        let fake: Vec<Array2<f32>> = (0..4).map(|_| noise(&mut r)).collect();
        let fake_refs: Vec<&Array2<f32>> = fake.iter().collect();
        let (_, g) = discriminator_gradients(&d, &real, &fake_refs).unwrap();
        opt.step(&mut d, &g);
        if step % 25 == 24 && accuracy(&d, &mut r) > 0.95 {
            reached = Some(step + 1);
            break;
        }
    }
    assert!(reached.is_some(), "accuracy {}", accuracy(&d, &mut r));
}

#[test]
fn non_finite_loss_stops_with_a_diagnostic() {
    let data = desk_dataset();
    let config = TrainConfig { use_discriminator: false, ..small_config(5) };
    let mut t = Trainer::new(config, &data).unwrap();
    t.model.generator.decoder.output.bias[0] = f32::NAN;
    let dir = tempfile::tempdir().unwrap();
    match t.fit(&data, Some(dir.path())) {
        Err(TrainError::NonFinite(diag)) => assert_eq!(diag.step, 0),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
    assert!(dir.path().join(DIAGNOSTIC_JSON).exists());
}

#[test]
fn periodic_evaluation_is_logged() {
    let data = desk_dataset();
    let config = TrainConfig { eval_every: 2, ..small_config(4) };
    let dir = tempfile::tempdir().unwrap();
    Trainer::new(config, &data).unwrap().fit(&data, Some(dir.path())).unwrap();
    let log = read(&dir.path().join(METRICS_LOG));
    // header plus train and validation rows at steps 2 and 4
    assert_eq!(log.lines().count(), 5);
}

#[test]
fn invalid_configs_are_rejected() {
    let data: Dataset<f32> = desk_dataset();
    for bad in [
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { generator_lr: -1.0, ..TrainConfig::default() },
        TrainConfig { norm_epsilon: 0.0, ..TrainConfig::default() },
    ] {
        assert!(matches!(Trainer::new(bad, &data), Err(TrainError::Config(_))));
    }
}
