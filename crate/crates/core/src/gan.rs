//! Adversarial training: one discriminator update then one generator update
//! per real batch, with fresh latent draws for each.

use std::io;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autonet::{bce_grad, bce_loss, Activation, AdamConfig, AdamState, DenseNet, NetError};
use crate::dataset::{BalancedDataset, DatasetError, PIXELS};
use crate::latent::{LatentPrior, QuantumLatentSampler, ShotLedger};
use crate::qsim::{CircuitSpec, NoiseSpec, QsimError};
use crate::rng;

pub const CLASSICAL_LATENT_DIM: usize = 100;
pub const PAPER_QUBIT_COUNTS: [usize; 3] = [3, 5, 7];

#[derive(Debug, Error)]
pub enum GanError {
    #[error("non-finite {which} loss {value} at step {step}")]
    NonFiniteLoss { which: &'static str, step: u64, value: f64 },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error(transparent)]
    Quantum(#[from] QsimError),
    #[error("{0}")]
    Sink(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelKind {
    Classical,
    Hqcgan { n_qubits: usize },
}

impl ModelKind {
    pub fn latent_dim(&self) -> usize {
        match *self {
            ModelKind::Classical => CLASSICAL_LATENT_DIM,
            ModelKind::Hqcgan { n_qubits } => n_qubits,
        }
    }

    pub fn qubits(&self) -> usize {
        match *self {
            ModelKind::Classical => 0,
            ModelKind::Hqcgan { n_qubits } => n_qubits,
        }
    }

    /// `classical`, `hqcgan-3`, …
    pub fn name(&self) -> String {
        match *self {
            ModelKind::Classical => "classical".to_string(),
            ModelKind::Hqcgan { n_qubits } => format!("hqcgan-{n_qubits}"),
        }
    }

    /// The four models compared in the experiment matrix.
    pub fn paper_matrix() -> Vec<ModelKind> {
        std::iter::once(ModelKind::Classical)
            .chain(
                PAPER_QUBIT_COUNTS
                    .iter()
                    .map(|&n_qubits| ModelKind::Hqcgan { n_qubits }),
            )
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub epochs: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub eval_every_samples: u64,
    pub seed: u64,
    pub noise: NoiseSpec,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Classical,
            epochs: 150,
            batch_size: 64,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            adam_eps: 1e-8,
            eval_every_samples: 100_000,
            seed: 0,
            noise: NoiseSpec::default(),
            generator_hidden: vec![256, 512],
            discriminator_hidden: vec![512, 256],
            leaky_slope: 0.2,
            init_std: 0.02,
        }
    }
}

impl TrainConfig {
    pub fn latent_dim(&self) -> usize {
        self.model.latent_dim()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: String| Err(GanError::Config(m));
        if let ModelKind::Hqcgan { n_qubits } = self.model {
            CircuitSpec::new(n_qubits)?;
        }
        self.noise.validate()?;
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.eval_every_samples == 0 {
            return bad("eval_every_samples must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad("init_std must be positive".into());
        }
        if self.generator_hidden.contains(&0) || self.discriminator_hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        Ok(())
    }

    pub fn prior(&self) -> Result<LatentPrior, GanError> {
        Ok(match self.model {
            ModelKind::Classical => LatentPrior::Gaussian {
                dim: CLASSICAL_LATENT_DIM,
            },
            ModelKind::Hqcgan { n_qubits } => {
                LatentPrior::Quantum(QuantumLatentSampler::new(CircuitSpec::new(n_qubits)?, self.noise)?)
            }
        })
    }

    /// Freshly initialized `(generator, discriminator)`.
    pub fn init_networks(&self) -> (DenseNet, DenseNet) {
        let mut g_dims = vec![self.latent_dim()];
        g_dims.extend(&self.generator_hidden);
        g_dims.push(PIXELS);
        let mut g_acts = vec![Activation::Relu; self.generator_hidden.len()];
        g_acts.push(Activation::Tanh);

        let mut d_dims = vec![PIXELS];
        d_dims.extend(&self.discriminator_hidden);
        d_dims.push(1);
        let mut d_acts = vec![Activation::LeakyRelu(self.leaky_slope); self.discriminator_hidden.len()];
        d_acts.push(Activation::Sigmoid);

        let generator = DenseNet::init(
            &g_dims,
            &g_acts,
            self.init_std,
            &mut rng::stream(self.seed, rng::STREAM_GENERATOR_INIT),
        );
        let discriminator = DenseNet::init(
            &d_dims,
            &d_acts,
            self.init_std,
            &mut rng::stream(self.seed, rng::STREAM_DISCRIMINATOR_INIT),
        );
        (generator, discriminator)
    }
}

/// `−½[mean log D(x) + mean log(1 − D(G(z)))]` on clamped probabilities.
pub fn discriminator_loss(d_real: &[f64], d_fake: &[f64]) -> f64 {
    0.5 * (bce_loss(d_real, &vec![1.0; d_real.len()]) + bce_loss(d_fake, &vec![0.0; d_fake.len()]))
}

/// `−mean log D(G(z))`.
pub fn generator_loss(d_fake: &[f64]) -> f64 {
    bce_loss(d_fake, &vec![1.0; d_fake.len()])
}

/// One discriminator update. The generator is only read.
pub fn discriminator_step(
    discriminator: &mut DenseNet,
    d_opt: &mut AdamState,
    generator: &DenseNet,
    real: &DMatrix<f64>,
    latent: &DMatrix<f64>,
) -> Result<f64, GanError> {
    let fake = generator.predict(latent)?;
    let real_cache = discriminator.forward(real)?;
    let fake_cache = discriminator.forward(&fake)?;
    let d_real = real_cache.output().as_slice();
    let d_fake = fake_cache.output().as_slice();
    let loss = discriminator_loss(d_real, d_fake);
    if !loss.is_finite() {
        return Err(GanError::NonFiniteLoss {
            which: "discriminator",
            step: d_opt.steps() + 1,
            value: loss,
        });
    }
    let up_real = bce_grad(d_real, &vec![1.0; d_real.len()]);
    let up_fake = bce_grad(d_fake, &vec![0.0; d_fake.len()]);
    let up_real = DMatrix::from_vec(up_real.len(), 1, up_real) * 0.5;
    let up_fake = DMatrix::from_vec(up_fake.len(), 1, up_fake) * 0.5;
    let (mut grads, _) = discriminator.backward(&real_cache, &up_real)?;
    let (fake_grads, _) = discriminator.backward(&fake_cache, &up_fake)?;
    for (g, f) in grads.layers.iter_mut().zip(fake_grads.layers) {
        g.weight += f.weight;
        g.bias += f.bias;
    }
    d_opt.step(discriminator, &grads)?;
    Ok(loss)
}

/// One generator update through a frozen discriminator.
pub fn generator_step(
    generator: &mut DenseNet,
    g_opt: &mut AdamState,
    discriminator: &DenseNet,
    latent: &DMatrix<f64>,
) -> Result<f64, GanError> {
    let g_cache = generator.forward(latent)?;
    let d_cache = discriminator.forward(g_cache.output())?;
    let d_fake = d_cache.output().as_slice();
    let loss = generator_loss(d_fake);
    if !loss.is_finite() {
        return Err(GanError::NonFiniteLoss {
            which: "generator",
            step: g_opt.steps() + 1,
            value: loss,
        });
    }
    let up = bce_grad(d_fake, &vec![1.0; d_fake.len()]);
    let up = DMatrix::from_vec(up.len(), 1, up);
    let (_, d_input) = discriminator.backward(&d_cache, &up)?;
    let (grads, _) = generator.backward(&g_cache, &d_input)?;
    g_opt.step(generator, &grads)?;
    Ok(loss)
}

/// Images from `count` latent draws.
pub fn generate<R: Rng + ?Sized>(
    generator: &DenseNet,
    prior: &LatentPrior,
    count: usize,
    rng: &mut R,
    ledger: &mut ShotLedger,
) -> Result<DMatrix<f64>, GanError> {
    let z = prior.sample_with(count, rng, ledger);
    Ok(generator.predict(&z.vectors)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Epoch,
    Eval,
    EpochEval,
}

impl RowKind {
    pub fn is_epoch(self) -> bool {
        matches!(self, RowKind::Epoch | RowKind::EpochEval)
    }

    pub fn is_eval(self) -> bool {
        matches!(self, RowKind::Eval | RowKind::EpochEval)
    }
}

/// One line of the training log. Losses are means over the steps since the
/// previous row; `wall_seconds_epoch` is training time (excluding evaluation)
/// spent so far in the current epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub samples_seen: u64,
    pub epoch: u64,
    pub loss_d: f64,
    pub loss_g: f64,
    pub wall_seconds_epoch: f64,
    pub shots_total: u64,
    pub row_kind: RowKind,
}

pub fn write_log_csv(path: &Path, rows: &[TrainLogRow]) -> Result<(), GanError> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "samples_seen",
            "epoch",
            "loss_d",
            "loss_g",
            "wall_seconds_epoch",
            "shots_total",
            "row_kind",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log_csv(path: &Path) -> Result<Vec<TrainLogRow>, GanError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// What an observer sees at an evaluation checkpoint.
pub struct Checkpoint<'a> {
    pub samples_seen: u64,
    pub epoch: u64,
    pub generator: &'a DenseNet,
    pub discriminator: &'a DenseNet,
    pub prior: &'a LatentPrior,
    pub shots_total: u64,
}

/// Hook for checkpoint writers and evaluators. Errors abort training.
pub trait TrainObserver {
    fn on_checkpoint(&mut self, checkpoint: &Checkpoint<'_>) -> Result<(), GanError>;
}

/// Observer that does nothing.
pub struct NoObserver;

impl TrainObserver for NoObserver {
    fn on_checkpoint(&mut self, _: &Checkpoint<'_>) -> Result<(), GanError> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub generator: DenseNet,
    pub discriminator: DenseNet,
    pub log: Vec<TrainLogRow>,
    pub samples_seen: u64,
    pub shots_total: u64,
    pub batches_per_epoch: usize,
}

#[derive(Default)]
struct Window {
    loss_d: f64,
    loss_g: f64,
    steps: u64,
}

impl Window {
    fn means(&self) -> (f64, f64) {
        let n = self.steps.max(1) as f64;
        (self.loss_d / n, self.loss_g / n)
    }
}

/// Runs the full loop. Checkpoints fire whenever `samples_seen` crosses a
/// multiple of `eval_every_samples`, and once more after the last epoch.
pub fn train(
    config: &TrainConfig,
    data: &BalancedDataset,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, GanError> {
    config.validate()?;
    let prior = config.prior()?;
    let (mut generator, mut discriminator) = config.init_networks();
    let mut g_opt = AdamState::new(&generator, config.adam());
    let mut d_opt = AdamState::new(&discriminator, config.adam());
    let mut latent_rng = rng::stream(config.seed, rng::STREAM_TRAIN_LATENT);
    let data_seed = rng::derive_seed(config.seed, rng::STREAM_DATA_ORDER);
    let mut ledger = ShotLedger::new();
    let batches_per_epoch = data.batches_per_epoch(config.batch_size);
    let batch = config.batch_size as u64;

    let mut log = Vec::new();
    let mut samples_seen = 0u64;
    let mut step = 0u64;
    let mut window = Window::default();

    for epoch in 0..config.epochs {
        let mut epoch_time = Duration::ZERO;
        let batches = data.epoch_batches(config.batch_size, data_seed, epoch)?;
        for real in batches {
            let started = Instant::now();
            step += 1;
            let z_d = prior.sample_with(config.batch_size, &mut latent_rng, &mut ledger);
            let loss_d = discriminator_step(&mut discriminator, &mut d_opt, &generator, &real, &z_d.vectors)
                .map_err(|e| with_step(e, step))?;
            let z_g = prior.sample_with(config.batch_size, &mut latent_rng, &mut ledger);
            let loss_g = generator_step(&mut generator, &mut g_opt, &discriminator, &z_g.vectors)
                .map_err(|e| with_step(e, step))?;
            epoch_time += started.elapsed();

            window.loss_d += loss_d;
            window.loss_g += loss_g;
            window.steps += 1;
            let before = samples_seen;
            samples_seen += batch;

            let crossed = samples_seen / config.eval_every_samples > before / config.eval_every_samples;
            let epoch_end = step.is_multiple_of(batches_per_epoch as u64);
            let last = epoch_end && epoch + 1 == config.epochs;
            let eval = crossed || last;
            if !(eval || epoch_end) {
                continue;
            }
            let (loss_d, loss_g) = window.means();
            window = Window::default();
            log.push(TrainLogRow {
                samples_seen,
                epoch: epoch + 1,
                loss_d,
                loss_g,
                wall_seconds_epoch: epoch_time.as_secs_f64(),
                shots_total: ledger.total_shots(),
                row_kind: match (epoch_end, eval) {
                    (true, true) => RowKind::EpochEval,
                    (true, false) => RowKind::Epoch,
                    _ => RowKind::Eval,
                },
            });
            if eval {
                observer.on_checkpoint(&Checkpoint {
                    samples_seen,
                    epoch: epoch + 1,
                    generator: &generator,
                    discriminator: &discriminator,
                    prior: &prior,
                    shots_total: ledger.total_shots(),
                })?;
            }
        }
    }

    Ok(TrainOutcome {
        generator,
        discriminator,
        log,
        samples_seen,
        shots_total: ledger.total_shots(),
        batches_per_epoch,
    })
}

fn with_step(err: GanError, step: u64) -> GanError {
    match err {
        GanError::NonFiniteLoss { which, value, .. } => GanError::NonFiniteLoss { which, step, value },
        other => other,
    }
}
