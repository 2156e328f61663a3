//! Experiment configuration: a TOML file with `[data]`, `[train]`, `[eval]`
//! and `[output]` sections. Unknown keys anywhere are errors.
//!
//! ```toml
//! [data]
//! dir = "data"
//! per_class = 1000
//!
//! [train]
//! epochs = 5
//! seed = 7
//! model = { kind = "hqcgan", n_qubits = 3 }
//!
//! [train.noise]
//! depolarizing_p = 0.01
//!
//! [eval]
//! embedding = "pca-64"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qgan_core::gan::{ModelKind, TrainConfig, PAPER_QUBIT_COUNTS};
use qgan_core::metrics::EmbeddingSpec;

use crate::error::{CliError, CliResult};

pub const DATA_DIR_ENV: &str = "QGAN_DATA_DIR";
pub const IMAGES_FILE: &str = "train-images-idx3-ubyte";
pub const LABELS_FILE: &str = "train-labels-idx1-ubyte";
pub const CACHE_FILE: &str = "mnist01.cache";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory with the IDX training files and the prepared cache.
    pub dir: PathBuf,
    /// Cache path; defaults to `<dir>/mnist01.cache`.
    pub cache: Option<PathBuf>,
    /// Train on a balanced subset of this many images per class.
    pub per_class: Option<usize>,
    /// Images per class withheld from training as the metric reference.
    /// With 0 the reference is drawn from the training images.
    pub holdout_per_class: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            cache: None,
            per_class: None,
            holdout_per_class: 0,
        }
    }
}

impl DataConfig {
    pub fn cache_path(&self) -> PathBuf {
        self.cache.clone().unwrap_or_else(|| self.dir.join(CACHE_FILE))
    }

    pub fn images_path(&self) -> PathBuf {
        self.dir.join(IMAGES_FILE)
    }

    pub fn labels_path(&self) -> PathBuf {
        self.dir.join(LABELS_FILE)
    }

    /// Replaces `dir` with `$QGAN_DATA_DIR` when that is set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV).filter(|d| !d.is_empty()) {
            self.dir = PathBuf::from(dir);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub embedding: EmbeddingSpec,
    pub generated_samples: usize,
    pub real_samples: usize,
    /// Sample PGMs written per checkpoint.
    pub grid_samples: usize,
    /// Score every checkpoint while training.
    pub during_training: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            embedding: EmbeddingSpec::Pca { k: 64 },
            generated_samples: 2000,
            real_samples: 2000,
            grid_samples: 16,
            during_training: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Run directory name; defaults to the model name.
    pub run_name: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            run_name: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.message)))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn run_dir(&self) -> PathBuf {
        let name = self.output.run_name.clone().unwrap_or_else(|| self.train.model.name());
        self.output.dir.join(name)
    }

    /// Parameter checks that need no file system.
    pub fn validate_params(&self) -> CliResult<()> {
        self.train.validate()?;
        if let ModelKind::Hqcgan { n_qubits } = self.train.model {
            if !PAPER_QUBIT_COUNTS.contains(&n_qubits) {
                log_note(&format!(
                    "hqcgan with {n_qubits} qubits is outside the compared set {PAPER_QUBIT_COUNTS:?}"
                ));
            }
        }
        if self.eval.generated_samples < 2 || self.eval.real_samples < 2 {
            return Err(CliError::usage("eval sample counts must be at least 2"));
        }
        if matches!(self.data.per_class, Some(0)) {
            return Err(CliError::usage("data.per_class must be at least 1"));
        }
        Ok(())
    }

    /// Parameter checks plus existence of the prepared cache.
    pub fn validate(&self) -> CliResult<()> {
        self.validate_params()?;
        let cache = self.data.cache_path();
        if !cache.is_file() {
            return Err(CliError::data(format!(
                "{}: prepared cache not found (run prepare-data)",
                cache.display()
            )));
        }
        Ok(())
    }
}

fn log_note(message: &str) {
    eprintln!("note: {message}");
}

#[cfg(test)]
mod tests {
    use super::*;
    use qgan_core::qsim::NoiseSpec;

    #[test]
    fn defaults_follow_the_training_recipe() {
        let c = ExperimentConfig::default();
        assert_eq!(c.train.epochs, 150);
        assert_eq!(c.train.batch_size, 64);
        assert_eq!(c.train.lr, 2e-4);
        assert_eq!(c.eval.embedding, EmbeddingSpec::Pca { k: 64 });
        assert_eq!(c.run_dir(), PathBuf::from("runs/classical"));
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig::default();
        c.train.model = ModelKind::Hqcgan { n_qubits: 5 };
        c.train.noise = NoiseSpec::noiseless();
        c.data.per_class = Some(10);
        c.eval.embedding = EmbeddingSpec::RandomProjection { k: 32, seed: 4 };
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn parses_the_documented_example() {
        let text = r#"
            [data]
            dir = "data"
            per_class = 1000

            [train]
            epochs = 5
            seed = 7
            model = { kind = "hqcgan", n_qubits = 3 }

            [train.noise]
            depolarizing_p = 0.01

            [eval]
            embedding = "pca-64"
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.train.model, ModelKind::Hqcgan { n_qubits: 3 });
        assert_eq!(c.train.noise.amplitude_damping_gamma, 0.03);
        assert_eq!(c.train.latent_dim(), 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "[train]\nepoch = 3\n",
            "[bogus]\n",
            "[train.noise]\nthermal = 0.1\n",
            "[eval]\nembedding = \"inception\"\n",
        ] {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}");
        }
    }

    #[test]
    fn capacity_is_a_usage_error() {
        let mut c = ExperimentConfig::default();
        c.train.model = ModelKind::Hqcgan { n_qubits: 11 };
        let err = c.validate_params().unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.message.contains("11"));
    }

    #[test]
    fn missing_cache_names_the_path() {
        let mut c = ExperimentConfig::default();
        c.data.dir = PathBuf::from("/nonexistent/qgan");
        let err = c.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.message.contains("/nonexistent/qgan/mnist01.cache"));
    }
}
