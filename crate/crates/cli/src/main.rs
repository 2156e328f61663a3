use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qgan_cli::config::{DataConfig, ExperimentConfig, DATA_DIR_ENV};
use qgan_cli::error::{CliError, CliResult};
use qgan_cli::inspect::{inspect_state, DEFAULT_SHOTS};
use qgan_cli::report::report;
use qgan_cli::run::{evaluate_run, prepare_data, train_run, EvaluateOptions};
use qgan_cli::run_paper_matrix;
use qgan_core::gan::ModelKind;
use qgan_core::metrics::EmbeddingSpec;
use qgan_core::qsim::NoiseSpec;

#[derive(Parser)]
#[command(
    name = "qgan",
    version,
    about = "Hybrid quantum-classical GAN workbench on binary MNIST"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter MNIST to digits 0 and 1, balance the classes and cache them.
    PrepareData(PrepareArgs),
    /// Train one model, or the full comparison matrix.
    Train(TrainArgs),
    /// Score a checkpoint of a finished run.
    Evaluate(EvaluateArgs),
    /// Write diagnostics for the noisy sampling circuit.
    InspectState(InspectArgs),
    /// Merge finished runs into comparison tables and curves.
    Report(ReportArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Directory holding train-images-idx3-ubyte and train-labels-idx1-ubyte.
    #[arg(long, env = DATA_DIR_ENV, default_value = "data")]
    data_dir: PathBuf,
    /// Cache path (default: <data-dir>/mnist01.cache).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Seed for undersampling the majority class.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rebuild the cache even if it exists.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Classical,
    Hqcgan,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    PaperMatrix,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Train all four compared models and write a report.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Qubits for the hybrid model (0 means classical).
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint interval in samples seen.
    #[arg(long)]
    eval_every: Option<u64>,
    /// raw_pixels, pca-<k> or random_projection-<k>-<seed>.
    #[arg(long)]
    embedding: Option<EmbeddingSpec>,
    /// Generated images per metric evaluation.
    #[arg(long)]
    eval_samples: Option<usize>,
    /// Train on a balanced subset of this many images per class.
    #[arg(long)]
    per_class: Option<usize>,
    /// Noise-free sampling circuit.
    #[arg(long)]
    no_noise: bool,
    /// Skip metric evaluation at checkpoints.
    #[arg(long)]
    no_eval: bool,
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// Parent directory for run directories.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    run_name: Option<String>,
    /// Replace an existing run directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    run_dir: PathBuf,
    /// Generator checkpoint (default: the latest in the run).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    embedding: Option<EmbeddingSpec>,
    /// Generated images to score.
    #[arg(long)]
    samples: Option<usize>,
    /// Also score two disjoint real splits against each other.
    #[arg(long)]
    self_test: bool,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    qubits: usize,
    /// Zero every noise parameter.
    #[arg(long)]
    no_noise: bool,
    #[arg(long)]
    depolarizing: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    readout_p01: Option<f64>,
    #[arg(long)]
    readout_p10: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SHOTS)]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "inspect")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    run_dirs: Vec<PathBuf>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

fn model_from(model: Option<ModelArg>, qubits: Option<usize>, current: ModelKind) -> CliResult<ModelKind> {
    match (model, qubits) {
        (None, None) => Ok(current),
        (Some(ModelArg::Classical), None | Some(0)) | (None, Some(0)) => Ok(ModelKind::Classical),
        (Some(ModelArg::Classical), Some(n)) => Err(CliError::usage(format!(
            "--qubits {n} conflicts with --model classical"
        ))),
        (Some(ModelArg::Hqcgan), Some(0)) => Err(CliError::usage("--model hqcgan needs --qubits >= 1")),
        (Some(ModelArg::Hqcgan), Some(n)) | (None, Some(n)) => Ok(ModelKind::Hqcgan { n_qubits: n }),
        (Some(ModelArg::Hqcgan), None) => match current {
            ModelKind::Hqcgan { .. } => Ok(current),
            ModelKind::Classical => Err(CliError::usage("--model hqcgan needs --qubits")),
        },
    }
}

fn train_config(a: &TrainArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.data.apply_env();
    cfg.train.model = model_from(a.model, a.qubits, cfg.train.model)?;
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = a.eval_every {
        cfg.train.eval_every_samples = v;
    }
    if let Some(v) = a.embedding {
        cfg.eval.embedding = v;
    }
    if let Some(v) = a.eval_samples {
        cfg.eval.generated_samples = v;
    }
    if let Some(v) = a.per_class {
        cfg.data.per_class = Some(v);
    }
    if a.no_noise {
        cfg.train.noise = NoiseSpec::noiseless();
    }
    if a.no_eval {
        cfg.eval.during_training = false;
    }
    if let Some(v) = &a.data_dir {
        cfg.data.dir = v.clone();
    }
    if let Some(v) = &a.out {
        cfg.output.dir = v.clone();
    }
    if let Some(v) = &a.run_name {
        cfg.output.run_name = Some(v.clone());
    }
    Ok(cfg)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::PrepareData(a) => {
            let data = DataConfig {
                dir: a.data_dir,
                cache: a.cache,
                ..DataConfig::default()
            };
            let out = prepare_data(&data, a.seed, a.force)?;
            if out.skipped {
                eprintln!(
                    "{}: cache present, nothing to do (pass --force to rebuild)",
                    out.cache.display()
                );
            } else {
                eprintln!("wrote {}", out.cache.display());
            }
            println!("{}", out.counts_line());
        }
        Command::Train(a) => {
            let cfg = train_config(&a)?;
            match a.preset {
                Some(Preset::PaperMatrix) => {
                    let (runs, rep) = run_paper_matrix(&cfg, a.force)?;
                    for r in &runs {
                        println!("{}", r.dir.display());
                    }
                    println!(
                        "report: {} ({})",
                        cfg.output.dir.join(qgan_cli::REPORT_DIR).display(),
                        rep.embedding
                    );
                }
                None => {
                    let r = train_run(&cfg, a.force)?;
                    let s = &r.summary;
                    println!("run: {}", r.dir.display());
                    println!("samples_seen: {}", s.samples_seen);
                    println!("shots_total: {}", s.shots_total);
                    if let Some(m) = &s.final_metrics {
                        println!(
                            "final {}: fid {} kid_linear {} kid_poly {}",
                            m.embedding,
                            opt(Some(m.fid)),
                            opt(Some(m.kid_linear)),
                            opt(Some(m.kid_poly))
                        );
                    }
                }
            }
        }
        Command::Evaluate(a) => {
            let out = evaluate_run(
                &a.run_dir,
                &EvaluateOptions {
                    checkpoint: a.checkpoint,
                    embedding: a.embedding,
                    generated_samples: a.samples,
                    self_test: a.self_test,
                },
            )?;
            let m = &out.row;
            println!("samples_seen,embedding,fid,kid_linear,kid_poly");
            println!(
                "{},{},{},{},{}",
                m.samples_seen, m.embedding, m.fid, m.kid_linear, m.kid_poly
            );
            if let Some(s) = out.self_test {
                println!(
                    "real-vs-real ({} images, {}): fid {} kid_linear {} kid_poly {}",
                    s.per_split, s.embedding, s.fid, s.kid_linear, s.kid_poly
                );
            }
        }
        Command::InspectState(a) => {
            let mut noise = if a.no_noise {
                NoiseSpec::noiseless()
            } else {
                NoiseSpec::default()
            };
            if let Some(v) = a.depolarizing {
                noise.depolarizing_p = v;
            }
            if let Some(v) = a.damping {
                noise.amplitude_damping_gamma = v;
            }
            if let Some(v) = a.readout_p01 {
                noise.readout_p01 = v;
            }
            if let Some(v) = a.readout_p10 {
                noise.readout_p10 = v;
            }
            let r = inspect_state(a.qubits, noise, a.shots, a.seed, &a.out)?;
            println!("wrote {}", a.out.display());
            for (q, v) in r.bloch_vectors.iter().enumerate() {
                // Adding 0.0 turns -0.0 into 0.0.
                let [x, y, z] = v.map(|c| c + 0.0);
                println!("qubit {q}: bloch ({x:.6}, {y:.6}, {z:.6})");
            }
        }
        Command::Report(a) => {
            let rep = report(&a.run_dirs, &a.out)?;
            for row in &rep.efficiency {
                println!("{}", row.join(","));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::usage(first).line());
            return ExitCode::from(1);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
