//! Data preparation through training and scoring on the bundled fixture.

use std::path::{Path, PathBuf};

use qgan_core::dataset::{filter_and_balance, parse_idx, BalancedDataset, PIXELS};
use qgan_core::gan::{train, ModelKind, NoObserver, TrainConfig};
use qgan_core::metrics::{EmbeddingSpec, ReferenceSet};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/mnist01")
}

fn load(dir: &Path) -> BalancedDataset {
    let raw = parse_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    filter_and_balance(&raw, 0).unwrap()
}

#[test]
fn fixture_balances_to_the_minority_count() {
    let dir = fixture_dir();
    let raw = parse_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    let zeros = raw.labels.iter().filter(|&&l| l == 0).count();
    let ones = raw.labels.iter().filter(|&&l| l == 1).count();
    assert_eq!((zeros, ones), (1001, 1127));
    let data = filter_and_balance(&raw, 0).unwrap();
    assert_eq!(data.class_counts(), [1001, 1001]);
    assert_eq!(data.batches_per_epoch(64), 31);
    let again = filter_and_balance(&raw, 0).unwrap();
    assert_eq!(data, again);
}

#[test]
fn cache_survives_a_round_trip() {
    let data = load(&fixture_dir());
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("mnist01.cache");
    data.write_cache(&path).unwrap();
    assert_eq!(BalancedDataset::read_cache(&path).unwrap(), data);
}

#[test]
fn one_epoch_then_score() {
    let data = load(&fixture_dir()).balanced_subset(128, 1).unwrap();
    let config = TrainConfig {
        model: ModelKind::Hqcgan { n_qubits: 3 },
        epochs: 1,
        batch_size: 32,
        eval_every_samples: 1_000_000,
        generator_hidden: vec![32],
        discriminator_hidden: vec![32],
        ..TrainConfig::default()
    };
    let out = train(&config, &data, &mut NoObserver).unwrap();
    assert_eq!(out.samples_seen, 256);
    assert_eq!(out.shots_total, 512);
    assert!(out.log.iter().all(|r| r.loss_d.is_finite() && r.loss_g.is_finite()));

    let real = data.pixel_matrix();
    assert_eq!(real.ncols(), PIXELS);
    let reference = ReferenceSet::new(EmbeddingSpec::Pca { k: 16 }, &real).unwrap();
    let self_score = reference.score(&real).unwrap();
    assert!(self_score.fid.abs() < 1e-6);
    let prior = config.prior().unwrap();
    let mut rng = qgan_core::rng::stream(0, qgan_core::rng::STREAM_EVAL);
    let mut ledger = qgan_core::latent::ShotLedger::new();
    let fake = qgan_core::gan::generate(&out.generator, &prior, 256, &mut rng, &mut ledger).unwrap();
    assert_eq!(ledger.total_shots(), 256);
    let s = reference.score(&fake).unwrap();
    assert!(s.fid > self_score.fid && s.fid.is_finite());
    assert!(s.kid_poly.is_finite() && s.kid_linear > 0.0);
}

/// Runs only when `QGAN_MNIST_DIR` points at the standard training files.
#[test]
fn standard_training_split_counts() {
    let Some(dir) = std::env::var_os("QGAN_MNIST_DIR") else {
        eprintln!("QGAN_MNIST_DIR unset; skipping");
        return;
    };
    let dir = PathBuf::from(dir);
    let raw = parse_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    assert_eq!(raw.len(), 60_000);
    let data = filter_and_balance(&raw, 0).unwrap();
    assert_eq!(data.class_counts(), [5923, 5923]);
    assert_eq!(data.batches_per_epoch(64), 185);
}
