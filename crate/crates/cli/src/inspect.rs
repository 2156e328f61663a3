//! Diagnostic bundle for the latent-sampling circuit.

use std::fs;
use std::path::Path;

use serde::Serialize;

use qgan_core::qsim::{sample_bitstrings, CircuitSpec, NoiseSpec, OutcomeHistogram, PauliTerm, MAX_FULL_PAULI_QUBITS};
use qgan_core::viz::{circuit_ascii, PlotData, PlotSpec};

use crate::error::{CliError, CliResult};
use crate::run::write_json;

pub const DEFAULT_SHOTS: u64 = 8192;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateReport {
    pub n_qubits: usize,
    pub noise: NoiseSpec,
    pub purity: f64,
    pub bloch_vectors: Vec<[f64; 3]>,
    pub pauli: Vec<PauliTerm>,
    pub distribution: Vec<f64>,
    pub histogram: OutcomeHistogram,
}

/// Writes `circuit.txt`, `state.json` and SVG/CSV pairs for the cityscape,
/// Pauli bars, Bloch vectors and a sampled histogram into `out`.
pub fn inspect_state(n_qubits: usize, noise: NoiseSpec, shots: u64, seed: u64, out: &Path) -> CliResult<StateReport> {
    let circuit = CircuitSpec::new(n_qubits)?;
    noise.validate()?;
    let rho = circuit.noisy_state(&noise)?;
    let max_weight = if n_qubits <= MAX_FULL_PAULI_QUBITS { n_qubits } else { 1 };
    let pauli = rho.pauli_expectations(max_weight)?;
    let distribution = rho.measurement_distribution()?;
    let histogram = sample_bitstrings(&distribution, shots, &noise, seed)?;
    let bloch = rho.bloch_vectors();
    let m = rho.matrix();
    let purity = (m * m).trace().re;

    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let circuit_path = out.join("circuit.txt");
    fs::write(&circuit_path, circuit_ascii(&circuit)).map_err(|e| CliError::io(&circuit_path, e))?;

    let title = |what: &str| format!("{what}, {n_qubits} qubits");
    PlotSpec::new(
        title("density matrix"),
        "basis state",
        "basis state",
        PlotData::from_cityscape(&rho.cityscape()),
    )
    .write(out, "cityscape")?;
    PlotSpec::new(
        title("Pauli expectations"),
        "Pauli string",
        "expectation",
        PlotData::from_pauli_terms(&pauli),
    )
    .write(out, "pauli")?;
    PlotSpec::new(
        title("Bloch vectors"),
        "x right, z up",
        "",
        PlotData::Bloch { vectors: bloch.clone() },
    )
    .write(out, "bloch")?;
    PlotSpec::new(
        format!("{shots} shots, {n_qubits} qubits"),
        "bitstring",
        "count",
        PlotData::from_histogram(&histogram),
    )
    .write(out, "histogram")?;

    let report = StateReport {
        n_qubits,
        noise,
        purity,
        bloch_vectors: bloch,
        pauli,
        distribution,
        histogram,
    };
    write_json(&out.join("state.json"), &report)?;
    Ok(report)
}
