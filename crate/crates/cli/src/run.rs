//! Data preparation, training runs and checkpoint evaluation.
//!
//! A run directory holds:
//!
//! ```text
//! config.toml                 resolved configuration snapshot
//! train_log.csv               one row per epoch and per checkpoint
//! metrics.csv                 samples_seen,embedding,fid,kid_linear,kid_poly
//! summary.json                totals, both shot interpretations, final metrics
//! checkpoints/<model>-<N>-generator.qnet
//! checkpoints/<model>-<N>-discriminator.qnet
//! samples/<N>/sample_<i>.pgm  fixed-latent sample grid
//! self_test.csv               real-vs-real floor, when requested
//! ```
//!
//! `<N>` is `samples_seen`, zero-padded to ten digits.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use qgan_core::autonet::DenseNet;
use qgan_core::dataset::{filter_and_balance, parse_idx, write_pgm, BalancedDataset};
use qgan_core::gan::{self, Checkpoint, GanError, TrainObserver, TrainOutcome};
use qgan_core::latent::{LatentPrior, ShotLedger};
use qgan_core::metrics::{EmbeddingSpec, MetricSet, ReferenceSet};
use qgan_core::rng;

use crate::config::{DataConfig, ExperimentConfig, CONFIG_SNAPSHOT};
use crate::error::{CliError, CliResult};

pub const TRAIN_LOG: &str = "train_log.csv";
pub const METRICS_LOG: &str = "metrics.csv";
pub const SUMMARY: &str = "summary.json";
pub const SELF_TEST: &str = "self_test.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const SAMPLE_DIR: &str = "samples";

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOutcome {
    pub cache: PathBuf,
    pub class_counts: [usize; 2],
    pub skipped: bool,
}

impl PrepareOutcome {
    /// `zeros / ones`.
    pub fn counts_line(&self) -> String {
        format!("{} / {}", self.class_counts[0], self.class_counts[1])
    }
}

/// Parses the IDX pair, keeps digits 0 and 1, balances them and writes the
/// cache. An existing cache is left alone unless `force` is set.
pub fn prepare_data(data: &DataConfig, seed: u64, force: bool) -> CliResult<PrepareOutcome> {
    let cache = data.cache_path();
    if cache.is_file() && !force {
        let ds = BalancedDataset::read_cache(&cache)?;
        return Ok(PrepareOutcome {
            cache,
            class_counts: ds.class_counts(),
            skipped: true,
        });
    }
    let raw = parse_idx(&data.images_path(), &data.labels_path())?;
    let ds = filter_and_balance(&raw, rng::derive_seed(seed, rng::STREAM_BALANCE))?;
    if let Some(parent) = cache.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    ds.write_cache(&cache)?;
    Ok(PrepareOutcome {
        cache,
        class_counts: ds.class_counts(),
        skipped: false,
    })
}

/// Training images and the real reference images for the metrics.
pub struct Splits {
    pub train: BalancedDataset,
    pub reference: DMatrix<f64>,
}

pub fn load_splits(cfg: &ExperimentConfig) -> CliResult<Splits> {
    let seed = cfg.train.seed;
    let mut ds = BalancedDataset::read_cache(&cfg.data.cache_path())?;
    if let Some(per_class) = cfg.data.per_class {
        ds = ds.balanced_subset(per_class, rng::derive_seed(seed, rng::STREAM_BALANCE))?;
    }
    let eval_seed = rng::derive_seed(seed, rng::STREAM_EVAL);
    if cfg.data.holdout_per_class > 0 {
        let (train, held) = ds.split_per_class(cfg.data.holdout_per_class, eval_seed)?;
        return Ok(Splits {
            train,
            reference: held.pixel_matrix(),
        });
    }
    let available = ds.class_counts()[0].min(ds.class_counts()[1]);
    let per_class = (cfg.eval.real_samples / 2).clamp(1, available);
    let reference = ds.balanced_subset(per_class, eval_seed)?.pixel_matrix();
    Ok(Splits { train: ds, reference })
}

/// Scores generators against a frozen real reference.
pub struct Scorer {
    reference: ReferenceSet,
    generated_samples: usize,
    seed: u64,
}

impl Scorer {
    pub fn new(cfg: &ExperimentConfig, real: &DMatrix<f64>) -> CliResult<Self> {
        Self::with_embedding(cfg, real, cfg.eval.embedding)
    }

    pub fn with_embedding(cfg: &ExperimentConfig, real: &DMatrix<f64>, embedding: EmbeddingSpec) -> CliResult<Self> {
        Ok(Self {
            reference: ReferenceSet::new(embedding, real)?,
            generated_samples: cfg.eval.generated_samples,
            seed: rng::derive_seed(cfg.train.seed, rng::STREAM_EVAL),
        })
    }

    pub fn embedding(&self) -> EmbeddingSpec {
        self.reference.embedding().spec()
    }

    /// Generated images for the checkpoint at `samples_seen`; the latent
    /// draws depend only on the seed and `samples_seen`.
    pub fn generate(
        &self,
        generator: &DenseNet,
        prior: &LatentPrior,
        samples_seen: u64,
        ledger: &mut ShotLedger,
    ) -> CliResult<DMatrix<f64>> {
        let mut r = rng::stream(self.seed, samples_seen);
        Ok(gan::generate(generator, prior, self.generated_samples, &mut r, ledger)?)
    }

    pub fn score_images(&self, images: &DMatrix<f64>) -> CliResult<MetricSet> {
        Ok(self.reference.score(images)?)
    }

    pub fn score(
        &self,
        generator: &DenseNet,
        prior: &LatentPrior,
        samples_seen: u64,
        ledger: &mut ShotLedger,
    ) -> CliResult<MetricRow> {
        let images = self.generate(generator, prior, samples_seen, ledger)?;
        Ok(MetricRow::new(
            samples_seen,
            self.embedding(),
            self.score_images(&images)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub samples_seen: u64,
    pub embedding: String,
    pub fid: f64,
    pub kid_linear: f64,
    pub kid_poly: f64,
}

impl MetricRow {
    pub fn new(samples_seen: u64, embedding: EmbeddingSpec, m: MetricSet) -> Self {
        Self {
            samples_seen,
            embedding: embedding.to_string(),
            fid: m.fid,
            kid_linear: m.kid_linear,
            kid_poly: m.kid_poly,
        }
    }
}

/// Appends rows, writing the header only into a new or empty file.
pub fn append_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn checkpoint_path(run_dir: &Path, model: &str, samples_seen: u64, net: &str) -> PathBuf {
    run_dir
        .join(CHECKPOINT_DIR)
        .join(format!("{model}-{samples_seen:010}-{net}.qnet"))
}

/// `samples_seen` encoded in a checkpoint file name.
pub fn checkpoint_samples(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let mut parts = stem.rsplitn(3, '-');
    parts.next()?;
    parts.next()?.parse().ok()
}

/// The generator checkpoint with the most samples seen.
pub fn latest_generator(run_dir: &Path) -> CliResult<PathBuf> {
    let dir = run_dir.join(CHECKPOINT_DIR);
    let entries = fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))?;
    entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with("-generator.qnet"))
        .filter_map(|p| checkpoint_samples(&p).map(|n| (n, p)))
        .max()
        .map(|(_, p)| p)
        .ok_or_else(|| CliError::data(format!("{}: no generator checkpoints", dir.display())))
}

pub fn load_net(path: &Path) -> CliResult<DenseNet> {
    if !path.is_file() {
        return Err(CliError::data(format!("{}: checkpoint not found", path.display())));
    }
    DenseNet::load(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Writes checkpoints, sample grids and metrics at every checkpoint.
struct RunWriter<'a> {
    dir: &'a Path,
    model: String,
    grid: DMatrix<f64>,
    scorer: Option<&'a Scorer>,
    eval_ledger: ShotLedger,
    metrics: Vec<MetricRow>,
}

impl RunWriter<'_> {
    fn write(&mut self, c: &Checkpoint<'_>) -> CliResult<()> {
        for (net, which) in [(c.generator, "generator"), (c.discriminator, "discriminator")] {
            let path = checkpoint_path(self.dir, &self.model, c.samples_seen, which);
            net.save(&path)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        }
        let sample_dir = self.dir.join(SAMPLE_DIR).join(format!("{:010}", c.samples_seen));
        fs::create_dir_all(&sample_dir).map_err(|e| CliError::io(&sample_dir, e))?;
        let images = c.generator.predict(&self.grid)?;
        for (i, row) in images.row_iter().enumerate() {
            let path = sample_dir.join(format!("sample_{i:02}.pgm"));
            let pixels: Vec<f64> = row.iter().copied().collect();
            write_pgm(&path, &pixels).map_err(|e| CliError::io(&path, e))?;
        }
        if let Some(scorer) = self.scorer {
            let row = scorer.score(c.generator, c.prior, c.samples_seen, &mut self.eval_ledger)?;
            append_csv(&self.dir.join(METRICS_LOG), std::slice::from_ref(&row))?;
            self.metrics.push(row);
        }
        Ok(())
    }
}

impl TrainObserver for RunWriter<'_> {
    fn on_checkpoint(&mut self, c: &Checkpoint<'_>) -> Result<(), GanError> {
        self.write(c).map_err(|e| GanError::Sink(e.message))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: String,
    pub qubits: usize,
    pub latent_dim: usize,
    pub seed: u64,
    pub epochs: u64,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub train_images: usize,
    pub samples_seen: u64,
    /// Latent shots consumed by training.
    pub shots_total: u64,
    /// Expected shots with separate latent draws for the two updates.
    pub expected_shots_independent_draws: u64,
    /// Expected shots if one latent batch served both updates.
    pub expected_shots_shared_draw: u64,
    /// Latent shots spent on sample grids and metric batches.
    pub eval_shots: u64,
    pub embedding: String,
    pub final_metrics: Option<MetricRow>,
    pub wall_seconds_epoch_mean: f64,
    pub wall_seconds_train_total: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub training: TrainOutcome,
    pub metrics: Vec<MetricRow>,
}

const RUN_FILES: [&str; 5] = [TRAIN_LOG, METRICS_LOG, SUMMARY, SELF_TEST, CONFIG_SNAPSHOT];

fn clear_run(dir: &Path) -> CliResult<()> {
    for f in RUN_FILES {
        let p = dir.join(f);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| CliError::io(&p, e))?;
        }
    }
    for d in [CHECKPOINT_DIR, SAMPLE_DIR] {
        let p = dir.join(d);
        if p.exists() {
            fs::remove_dir_all(&p).map_err(|e| CliError::io(&p, e))?;
        }
    }
    Ok(())
}

/// Trains one model into its run directory.
pub fn train_run(cfg: &ExperimentConfig, force: bool) -> CliResult<RunOutcome> {
    cfg.validate()?;
    let dir = cfg.run_dir();
    if dir.join(TRAIN_LOG).exists() || dir.join(CONFIG_SNAPSHOT).exists() {
        if !force {
            return Err(CliError::usage(format!(
                "{}: run directory already holds a run (pass --force to replace it)",
                dir.display()
            )));
        }
        clear_run(&dir)?;
    }
    fs::create_dir_all(dir.join(CHECKPOINT_DIR)).map_err(|e| CliError::io(&dir, e))?;
    let snapshot = dir.join(CONFIG_SNAPSHOT);
    fs::write(&snapshot, cfg.to_toml()).map_err(|e| CliError::io(&snapshot, e))?;

    let splits = load_splits(cfg)?;
    let scorer = if cfg.eval.during_training {
        Some(Scorer::new(cfg, &splits.reference)?)
    } else {
        None
    };
    let prior = cfg.train.prior()?;
    let mut eval_ledger = ShotLedger::new();
    let grid = prior
        .sample_with(
            cfg.eval.grid_samples.max(1),
            &mut rng::stream(cfg.train.seed, rng::STREAM_SAMPLE_GRID),
            &mut eval_ledger,
        )
        .vectors;
    let model = cfg.train.model.name();
    let mut writer = RunWriter {
        dir: &dir,
        model: model.clone(),
        grid,
        scorer: scorer.as_ref(),
        eval_ledger,
        metrics: Vec::new(),
    };
    let training = gan::train(&cfg.train, &splits.train, &mut writer)?;
    gan::write_log_csv(&dir.join(TRAIN_LOG), &training.log)?;

    let epoch_times: Vec<f64> = training
        .log
        .iter()
        .filter(|r| r.row_kind.is_epoch())
        .map(|r| r.wall_seconds_epoch)
        .collect();
    let total: f64 = epoch_times.iter().sum();
    let summary = RunSummary {
        model,
        qubits: cfg.train.model.qubits(),
        latent_dim: cfg.train.latent_dim(),
        seed: cfg.train.seed,
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        batches_per_epoch: training.batches_per_epoch,
        train_images: splits.train.len(),
        samples_seen: training.samples_seen,
        shots_total: training.shots_total,
        expected_shots_independent_draws: if cfg.train.model.qubits() > 0 {
            2 * training.samples_seen
        } else {
            0
        },
        expected_shots_shared_draw: if cfg.train.model.qubits() > 0 {
            training.samples_seen
        } else {
            0
        },
        eval_shots: writer.eval_ledger.total_shots(),
        embedding: cfg.eval.embedding.to_string(),
        final_metrics: writer.metrics.last().cloned(),
        wall_seconds_epoch_mean: if epoch_times.is_empty() {
            0.0
        } else {
            total / epoch_times.len() as f64
        },
        wall_seconds_train_total: total,
    };
    write_json(&dir.join(SUMMARY), &summary)?;
    let metrics = writer.metrics;
    Ok(RunOutcome {
        dir,
        summary,
        training,
        metrics,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Loads a run's configuration snapshot, honouring `$QGAN_DATA_DIR`.
pub fn load_run_config(run_dir: &Path) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&run_dir.join(CONFIG_SNAPSHOT))?;
    cfg.data.apply_env();
    Ok(cfg)
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    pub checkpoint: Option<PathBuf>,
    pub embedding: Option<EmbeddingSpec>,
    pub generated_samples: Option<usize>,
    pub self_test: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestRow {
    pub embedding: String,
    pub per_split: usize,
    pub fid: f64,
    pub kid_linear: f64,
    pub kid_poly: f64,
}

#[derive(Debug, Clone)]
pub struct EvaluateOutcome {
    pub row: MetricRow,
    pub self_test: Option<SelfTestRow>,
}

/// Scores a generator checkpoint (the latest by default) and appends the
/// row to `metrics.csv`.
pub fn evaluate_run(run_dir: &Path, opts: &EvaluateOptions) -> CliResult<EvaluateOutcome> {
    let mut cfg = load_run_config(run_dir)?;
    if let Some(e) = opts.embedding {
        cfg.eval.embedding = e;
    }
    if let Some(n) = opts.generated_samples {
        cfg.eval.generated_samples = n;
    }
    cfg.validate()?;
    let checkpoint = match &opts.checkpoint {
        Some(p) => p.clone(),
        None => latest_generator(run_dir)?,
    };
    let generator = load_net(&checkpoint)?;
    if generator.input_dim() != cfg.train.latent_dim() {
        return Err(CliError::data(format!(
            "{}: generator takes {} latent inputs, the run uses {}",
            checkpoint.display(),
            generator.input_dim(),
            cfg.train.latent_dim()
        )));
    }
    let samples_seen = checkpoint_samples(&checkpoint).unwrap_or(0);
    let splits = load_splits(&cfg)?;
    let scorer = Scorer::new(&cfg, &splits.reference)?;
    let prior = cfg.train.prior()?;
    let row = scorer.score(&generator, &prior, samples_seen, &mut ShotLedger::new())?;
    append_csv(&run_dir.join(METRICS_LOG), std::slice::from_ref(&row))?;

    let self_test = if opts.self_test {
        let row = real_vs_real(&cfg)?;
        append_csv(&run_dir.join(SELF_TEST), std::slice::from_ref(&row))?;
        Some(row)
    } else {
        None
    };
    Ok(EvaluateOutcome { row, self_test })
}

/// Metrics between two disjoint balanced real splits of the prepared cache,
/// each of up to `eval.real_samples` images.
pub fn real_vs_real(cfg: &ExperimentConfig) -> CliResult<SelfTestRow> {
    let ds = BalancedDataset::read_cache(&cfg.data.cache_path())?;
    let available = ds.class_counts()[0].min(ds.class_counts()[1]) / 2;
    let per_class = (cfg.eval.real_samples / 2).min(available);
    if per_class == 0 {
        return Err(CliError::data("too few images for a real-vs-real split"));
    }
    let seed = rng::derive_seed(cfg.train.seed, rng::STREAM_EVAL);
    let (rest, a) = ds.split_per_class(per_class, seed)?;
    let b = rest.balanced_subset(per_class, seed.wrapping_add(1))?;
    let reference = ReferenceSet::new(cfg.eval.embedding, &a.pixel_matrix())?;
    let m = reference.score(&b.pixel_matrix())?;
    Ok(SelfTestRow {
        embedding: cfg.eval.embedding.to_string(),
        per_split: 2 * per_class,
        fid: m.fid,
        kid_linear: m.kid_linear,
        kid_poly: m.kid_poly,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_names_round_trip() {
        let p = checkpoint_path(Path::new("runs/x"), "hqcgan-3", 1984, "generator");
        assert_eq!(
            p,
            PathBuf::from("runs/x/checkpoints/hqcgan-3-0000001984-generator.qnet")
        );
        assert_eq!(checkpoint_samples(&p), Some(1984));
        let c = checkpoint_path(Path::new("."), "classical", 7, "discriminator");
        assert_eq!(checkpoint_samples(&c), Some(7));
    }

    #[test]
    fn append_writes_one_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let row = MetricRow {
            samples_seen: 1,
            embedding: "pca-64".into(),
            fid: 1.5,
            kid_linear: 0.25,
            kid_poly: -0.125,
        };
        append_csv(&path, std::slice::from_ref(&row)).unwrap();
        append_csv(&path, std::slice::from_ref(&row)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("samples_seen").count(), 1);
        assert_eq!(read_csv::<MetricRow>(&path).unwrap(), vec![row.clone(), row]);
    }
}
