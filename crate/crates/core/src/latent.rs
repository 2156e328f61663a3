//! Latent priors: sign vectors from noisy circuit shots, or a standard normal.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::qsim::{CircuitSpec, NoiseSpec, QsimError, ShotSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LatentSource {
    Quantum { n_qubits: usize },
    Gaussian { dim: usize },
}

impl LatentSource {
    pub fn dim(&self) -> usize {
        match *self {
            LatentSource::Quantum { n_qubits } => n_qubits,
            LatentSource::Gaussian { dim } => dim,
        }
    }
}

/// A batch of latent vectors, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub vectors: DMatrix<f64>,
    pub source: LatentSource,
    pub shots_consumed: u64,
}

impl LatentBatch {
    pub fn batch_size(&self) -> usize {
        self.vectors.nrows()
    }
}

/// Running total of circuit shots. Only ever grows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotLedger {
    total_shots: u64,
}

impl ShotLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total_shots(&self) -> u64 {
        self.total_shots
    }

    pub fn record(&mut self, shots: u64) {
        self.total_shots += shots;
    }
}

/// `z_i = 2 b_i − 1` over a bitstring written most-significant qubit first.
pub fn bitstring_to_latent(bits: &str) -> Vec<f64> {
    bits.chars()
        .map(|c| match c {
            '0' => -1.0,
            '1' => 1.0,
            other => panic!("bitstring contains {other:?}"),
        })
        .collect()
}

/// Inverse of [`bitstring_to_latent`].
pub fn latent_to_bitstring(z: &[f64]) -> String {
    z.iter()
        .map(|&v| if (v + 1.0) / 2.0 >= 0.5 { '1' } else { '0' })
        .collect()
}

/// Writes the sign vector of basis index `outcome` into `row`, in label order.
fn write_outcome(outcome: usize, row: &mut [f64]) {
    let n = row.len();
    for (pos, z) in row.iter_mut().enumerate() {
        let bit = (outcome >> (n - 1 - pos)) & 1;
        *z = 2.0 * bit as f64 - 1.0;
    }
}

/// Shot source for one `(circuit, noise)` pair. The density matrix and its
/// measurement distribution are computed once at construction.
#[derive(Debug, Clone)]
pub struct QuantumLatentSampler {
    circuit: CircuitSpec,
    noise: NoiseSpec,
    distribution: Vec<f64>,
    sampler: ShotSampler,
}

impl QuantumLatentSampler {
    pub fn new(circuit: CircuitSpec, noise: NoiseSpec) -> Result<Self, QsimError> {
        let distribution = circuit.noisy_state(&noise)?.measurement_distribution()?;
        let sampler = ShotSampler::new(&distribution, &noise)?;
        Ok(Self {
            circuit,
            noise,
            distribution,
            sampler,
        })
    }

    pub fn circuit(&self) -> CircuitSpec {
        self.circuit
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    /// Pre-readout outcome probabilities, indexed by basis state.
    pub fn distribution(&self) -> &[f64] {
        &self.distribution
    }

    /// One shot per row; the ledger grows by `batch`.
    pub fn sample_with<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R, ledger: &mut ShotLedger) -> LatentBatch {
        let n = self.circuit.n_qubits();
        let mut vectors = DMatrix::zeros(batch, n);
        let mut row = vec![0.0; n];
        for r in 0..batch {
            write_outcome(self.sampler.shot(rng), &mut row);
            for (c, v) in row.iter().enumerate() {
                vectors[(r, c)] = *v;
            }
        }
        ledger.record(batch as u64);
        LatentBatch {
            vectors,
            source: LatentSource::Quantum { n_qubits: n },
            shots_consumed: batch as u64,
        }
    }

    pub fn sample(&self, batch: usize, seed: u64, ledger: &mut ShotLedger) -> LatentBatch {
        self.sample_with(batch, &mut ChaCha8Rng::seed_from_u64(seed), ledger)
    }
}

/// One-shot convenience: build the circuit, sample, map to sign vectors.
pub fn sample_quantum_batch(
    circuit: CircuitSpec,
    noise: &NoiseSpec,
    batch: usize,
    seed: u64,
    ledger: &mut ShotLedger,
) -> Result<LatentBatch, QsimError> {
    if batch == 0 {
        return Err(QsimError::ZeroShots);
    }
    Ok(QuantumLatentSampler::new(circuit, *noise)?.sample(batch, seed, ledger))
}

pub fn gaussian_batch_with<R: Rng + ?Sized>(dim: usize, batch: usize, rng: &mut R) -> LatentBatch {
    let vectors = DMatrix::from_fn(batch, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    LatentBatch {
        vectors,
        source: LatentSource::Gaussian { dim },
        shots_consumed: 0,
    }
}

pub fn sample_gaussian_batch(dim: usize, batch: usize, seed: u64) -> LatentBatch {
    gaussian_batch_with(dim, batch, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Either prior behind one interface, as used by the training loop.
#[derive(Debug, Clone)]
pub enum LatentPrior {
    Quantum(QuantumLatentSampler),
    Gaussian { dim: usize },
}

impl LatentPrior {
    pub fn source(&self) -> LatentSource {
        match self {
            LatentPrior::Quantum(q) => LatentSource::Quantum {
                n_qubits: q.circuit().n_qubits(),
            },
            LatentPrior::Gaussian { dim } => LatentSource::Gaussian { dim: *dim },
        }
    }

    pub fn dim(&self) -> usize {
        self.source().dim()
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R, ledger: &mut ShotLedger) -> LatentBatch {
        match self {
            LatentPrior::Quantum(q) => q.sample_with(batch, rng, ledger),
            LatentPrior::Gaussian { dim } => gaussian_batch_with(*dim, batch, rng),
        }
    }
}
