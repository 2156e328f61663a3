//! Cross-run comparison: a quality table (final FID and KID per model), an
//! efficiency table (qubits, latent size, timing, shots) and training curves
//! against samples seen.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use qgan_core::gan::{read_log_csv, TrainLogRow};
use qgan_core::viz::{PlotData, PlotSpec, Series};

use crate::error::{CliError, CliResult};
use crate::run::{read_csv, read_json, MetricRow, RunSummary, METRICS_LOG, SUMMARY, TRAIN_LOG};

pub const QUALITY_TABLE: &str = "table_quality.csv";
pub const EFFICIENCY_TABLE: &str = "table_efficiency.csv";

#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub log: Vec<TrainLogRow>,
    pub metrics: Vec<MetricRow>,
}

impl LoadedRun {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let summary: RunSummary = read_json(&dir.join(SUMMARY))?;
        let log_path = dir.join(TRAIN_LOG);
        let log = read_log_csv(&log_path).map_err(|e| CliError::data(format!("{}: {e}", log_path.display())))?;
        let metrics_path = dir.join(METRICS_LOG);
        let metrics = if metrics_path.is_file() {
            read_csv(&metrics_path)?
        } else {
            Vec::new()
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            summary,
            log,
            metrics,
        })
    }

    /// The metric row with the most samples seen (the latest on ties).
    pub fn final_metrics(&self) -> Option<&MetricRow> {
        self.metrics.iter().rev().max_by_key(|m| m.samples_seen)
    }

    /// Mean training seconds per full epoch.
    pub fn seconds_per_epoch(&self) -> Option<f64> {
        let t: Vec<f64> = self
            .log
            .iter()
            .filter(|r| r.row_kind.is_epoch())
            .map(|r| r.wall_seconds_epoch)
            .collect();
        (!t.is_empty()).then(|| t.iter().sum::<f64>() / t.len() as f64)
    }

    pub fn seconds_per_million_samples(&self) -> Option<f64> {
        let per_epoch = (self.summary.batches_per_epoch * self.summary.batch_size) as f64;
        self.seconds_per_epoch()
            .filter(|_| per_epoch > 0.0)
            .map(|s| s / per_epoch * 1e6)
    }

    fn embeddings(&self) -> BTreeSet<String> {
        let mut e: BTreeSet<String> = self.metrics.iter().map(|m| m.embedding.clone()).collect();
        if e.is_empty() {
            e.insert(self.summary.embedding.clone());
        }
        e
    }
}

/// Rows of cells; the first row is the header.
pub type Table = Vec<Vec<String>>;

#[derive(Debug, Clone)]
pub struct Report {
    pub embedding: String,
    pub quality: Table,
    pub efficiency: Table,
    pub curves: Vec<(String, PlotSpec)>,
}

/// Loads, orders (by qubit count, then name) and checks that all runs share
/// one embedding.
pub fn load_runs(dirs: &[PathBuf]) -> CliResult<Vec<LoadedRun>> {
    if dirs.is_empty() {
        return Err(CliError::usage("report needs at least one run directory"));
    }
    let mut runs = dirs.iter().map(|d| LoadedRun::load(d)).collect::<CliResult<Vec<_>>>()?;
    runs.sort_by(|a, b| {
        (a.summary.qubits, &a.summary.model, &a.dir).cmp(&(b.summary.qubits, &b.summary.model, &b.dir))
    });
    let all: BTreeSet<String> = runs.iter().flat_map(|r| r.embeddings()).collect();
    if all.len() > 1 {
        let listing: Vec<String> = runs
            .iter()
            .map(|r| {
                let e: Vec<String> = r.embeddings().into_iter().collect();
                format!("{} ({})", r.dir.display(), e.join("+"))
            })
            .collect();
        return Err(CliError::usage(format!(
            "runs use different embeddings: {}",
            listing.join(", ")
        )));
    }
    Ok(runs)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| v.to_string())
}

fn seconds(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

pub fn build_report(runs: &[LoadedRun]) -> Report {
    let embedding = runs
        .first()
        .and_then(|r| r.embeddings().into_iter().next())
        .unwrap_or_default();
    let mut header = vec!["metric".to_string()];
    header.extend(runs.iter().map(|r| r.summary.model.clone()));

    let row = |name: &str, f: &dyn Fn(&LoadedRun) -> String| {
        let mut r = vec![name.to_string()];
        r.extend(runs.iter().map(f));
        r
    };
    let quality = vec![
        header.clone(),
        row("Embedding", &|_| embedding.clone()),
        row("Samples seen", &|r| {
            r.final_metrics().map_or("n/a".into(), |m| m.samples_seen.to_string())
        }),
        row("FID", &|r| cell(r.final_metrics().map(|m| m.fid))),
        row("KID (mean gap)", &|r| cell(r.final_metrics().map(|m| m.kid_linear))),
        row("KID (poly MMD)", &|r| cell(r.final_metrics().map(|m| m.kid_poly))),
    ];
    let efficiency = vec![
        header,
        row("Qubits", &|r| r.summary.qubits.to_string()),
        row("Lat. dim", &|r| r.summary.latent_dim.to_string()),
        row("Time/epoch (s)", &|r| seconds(r.seconds_per_epoch())),
        row("Time/1M samples (s)", &|r| seconds(r.seconds_per_million_samples())),
        row("Q. shots", &|r| r.summary.shots_total.to_string()),
    ];

    let log_curve = |f: fn(&TrainLogRow) -> f64| -> Vec<Series> {
        runs.iter()
            .map(|r| Series {
                name: r.summary.model.clone(),
                points: r.log.iter().map(|row| (row.samples_seen as f64, f(row))).collect(),
            })
            .collect()
    };
    let metric_curve = |f: fn(&MetricRow) -> f64| -> Vec<Series> {
        runs.iter()
            .map(|r| Series {
                name: r.summary.model.clone(),
                points: r.metrics.iter().map(|m| (m.samples_seen as f64, f(m))).collect(),
            })
            .collect()
    };
    let curve = |title: String, y: &str, series: Vec<Series>| {
        PlotSpec::new(title, "samples seen", y, PlotData::Curve { series })
    };
    let mut curves = vec![
        (
            "loss_discriminator".to_string(),
            curve("Discriminator loss".into(), "L_D", log_curve(|r| r.loss_d)),
        ),
        (
            "loss_generator".to_string(),
            curve("Generator loss".into(), "L_G", log_curve(|r| r.loss_g)),
        ),
    ];
    if runs.iter().any(|r| !r.metrics.is_empty()) {
        curves.push((
            "fid".to_string(),
            curve(format!("FID ({embedding})"), "FID", metric_curve(|m| m.fid)),
        ));
        curves.push((
            "kid_linear".to_string(),
            curve(
                format!("KID, mean gap ({embedding})"),
                "KID",
                metric_curve(|m| m.kid_linear),
            ),
        ));
        curves.push((
            "kid_poly".to_string(),
            curve(
                format!("KID, poly MMD ({embedding})"),
                "KID",
                metric_curve(|m| m.kid_poly),
            ),
        ));
    }
    Report {
        embedding,
        quality,
        efficiency,
        curves,
    }
}

pub fn write_table(path: &Path, table: &Table) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    for row in table {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    r.records()
        .map(|rec| Ok(rec?.iter().map(str::to_string).collect()))
        .collect()
}

/// Writes both tables and every curve (SVG plus CSV) into `out`.
pub fn report(dirs: &[PathBuf], out: &Path) -> CliResult<Report> {
    let runs = load_runs(dirs)?;
    let report = build_report(&runs);
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_table(&out.join(QUALITY_TABLE), &report.quality)?;
    write_table(&out.join(EFFICIENCY_TABLE), &report.efficiency)?;
    for (stem, spec) in &report.curves {
        spec.write(out, stem)?;
    }
    Ok(report)
}
