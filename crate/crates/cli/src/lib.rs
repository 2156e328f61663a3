//! Experiment driver behind the `qgan` executable.

pub mod config;
pub mod error;
pub mod inspect;
pub mod report;
pub mod run;

use std::path::PathBuf;

use qgan_core::gan::ModelKind;

use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::run::{train_run, RunOutcome};

pub const REPORT_DIR: &str = "report";

/// Trains the classical model and every compared hybrid model with shared
/// data and seeds, then writes the comparison report under
/// `<output.dir>/report`.
pub fn run_paper_matrix(base: &ExperimentConfig, force: bool) -> CliResult<(Vec<RunOutcome>, report::Report)> {
    let mut outcomes = Vec::new();
    for model in ModelKind::paper_matrix() {
        let mut cfg = base.clone();
        cfg.train.model = model;
        cfg.output.run_name = Some(model.name());
        outcomes.push(train_run(&cfg, force)?);
    }
    let dirs: Vec<PathBuf> = outcomes.iter().map(|o| o.dir.clone()).collect();
    let rep = report::report(&dirs, &base.output.dir.join(REPORT_DIR))?;
    Ok((outcomes, rep))
}
