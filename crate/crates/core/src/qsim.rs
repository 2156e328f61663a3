//! Dense density-matrix simulation of a single Hadamard layer under noise.
//!
//! Basis ordering follows the usual little-endian convention: qubit `q` is
//! bit `q` of the basis index. Bitstrings are written most-significant qubit
//! first, so the label of basis index `i` is simply `i` in binary padded to
//! `n` digits, and character `0` of a label belongs to qubit `n - 1`.
//!
//! Only the operations needed by the latent sampler exist here: ground-state
//! preparation, the Hadamard layer, depolarizing and amplitude-damping
//! channels on single qubits, and measurement with per-shot readout flips.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 10;

/// Pauli strings of every weight may only be enumerated up to this size.
pub const MAX_FULL_PAULI_QUBITS: usize = 3;

/// Diagonal entries more negative than this abort measurement.
pub const NEGATIVE_PROBABILITY_LIMIT: f64 = 1e-8;

const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

type Mat2 = [[Complex64; 2]; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsimError {
    #[error("qubit count {0} outside the simulator capacity 1..={MAX_QUBITS}")]
    Capacity(usize),
    #[error("{name} = {value} is not a probability in [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("qubit {qubit} out of range for a {n_qubits}-qubit register")]
    QubitIndex { qubit: usize, n_qubits: usize },
    #[error("diagonal entry {index} is {value:e}, below the clamp limit -1e-8")]
    NegativeProbability { index: usize, value: f64 },
    #[error("measurement diagonal is not normalizable")]
    NotNormalizable,
    #[error("distribution of length {0} is not indexed by 1..=10 qubits")]
    DistributionLength(usize),
    #[error("distribution sums to {0}, expected 1 within 1e-9")]
    DistributionSum(f64),
    #[error("shot count must be at least 1")]
    ZeroShots,
    #[error("max weight {max_weight} exceeds the register size {n_qubits}")]
    PauliWeight { max_weight: usize, n_qubits: usize },
    #[error("full Pauli enumeration over {0} qubits is refused (limit {MAX_FULL_PAULI_QUBITS})")]
    PauliBlowup(usize),
    #[error("matrix of shape {rows}x{cols} is not 2^{n_qubits} square")]
    Shape { rows: usize, cols: usize, n_qubits: usize },
}

fn check_probability(name: &'static str, value: f64) -> Result<f64, QsimError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(QsimError::Probability { name, value })
    }
}

fn check_register(n_qubits: usize) -> Result<(), QsimError> {
    if (1..=MAX_QUBITS).contains(&n_qubits) {
        Ok(())
    } else {
        Err(QsimError::Capacity(n_qubits))
    }
}

/// Bitstring label of a basis index, most-significant qubit first.
pub fn basis_label(index: usize, n_qubits: usize) -> String {
    format!("{index:0n_qubits$b}")
}

/// Noise magnitudes for the sampling circuit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Depolarizing probability applied once after each Hadamard gate.
    pub depolarizing_p: f64,
    /// Amplitude-damping strength applied once per qubit after the gate layer.
    pub amplitude_damping_gamma: f64,
    /// P(read 1 | true 0), per qubit.
    pub readout_p01: f64,
    /// P(read 0 | true 1), per qubit.
    pub readout_p10: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            depolarizing_p: 0.01,
            amplitude_damping_gamma: 0.03,
            readout_p01: 0.02,
            readout_p10: 0.02,
        }
    }
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            depolarizing_p: 0.0,
            amplitude_damping_gamma: 0.0,
            readout_p01: 0.0,
            readout_p10: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), QsimError> {
        check_probability("depolarizing_p", self.depolarizing_p)?;
        check_probability("amplitude_damping_gamma", self.amplitude_damping_gamma)?;
        check_probability("readout_p01", self.readout_p01)?;
        check_probability("readout_p10", self.readout_p10)?;
        Ok(())
    }
}

/// The sampling circuit: `|0…0⟩`, one Hadamard per qubit, full measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitSpec {
    n_qubits: usize,
}

impl CircuitSpec {
    pub fn new(n_qubits: usize) -> Result<Self, QsimError> {
        check_register(n_qubits)?;
        Ok(Self { n_qubits })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Runs Hadamard → depolarizing → amplitude damping and returns the
    /// pre-measurement state.
    pub fn noisy_state(&self, noise: &NoiseSpec) -> Result<DensityMatrix, QsimError> {
        noise.validate()?;
        let mut rho = DensityMatrix::ground(self.n_qubits)?.hadamard_all();
        for q in 0..self.n_qubits {
            rho = rho.depolarize(noise.depolarizing_p, q)?;
        }
        for q in 0..self.n_qubits {
            rho = rho.amplitude_damp(noise.amplitude_damping_gamma, q)?;
        }
        Ok(rho)
    }
}

/// A `2^n × 2^n` density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    data: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// `|0…0⟩⟨0…0|`.
    pub fn ground(n_qubits: usize) -> Result<Self, QsimError> {
        check_register(n_qubits)?;
        let dim = 1usize << n_qubits;
        let mut data = DMatrix::zeros(dim, dim);
        data[(0, 0)] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, data })
    }

    /// Wraps an explicit matrix. Only the shape is checked; use the
    /// deviation accessors to audit the physical invariants.
    pub fn from_matrix(n_qubits: usize, data: DMatrix<Complex64>) -> Result<Self, QsimError> {
        check_register(n_qubits)?;
        let dim = 1usize << n_qubits;
        if data.nrows() != dim || data.ncols() != dim {
            return Err(QsimError::Shape {
                rows: data.nrows(),
                cols: data.ncols(),
                n_qubits,
            });
        }
        Ok(Self { n_qubits, data })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[(row, col)]
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    /// `max |ρ_ij − conj(ρ_ji)|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        let dim = self.dim();
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in i..dim {
                worst = worst.max((self.data[(i, j)] - self.data[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let hermitian = (&self.data + self.data.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(hermitian)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    fn check_qubit(&self, qubit: usize) -> Result<(), QsimError> {
        if qubit < self.n_qubits {
            Ok(())
        } else {
            Err(QsimError::QubitIndex {
                qubit,
                n_qubits: self.n_qubits,
            })
        }
    }

    /// `K ρ K†` with `K` acting on one qubit.
    fn conjugate_local(&self, k: &Mat2, qubit: usize) -> DMatrix<Complex64> {
        let dim = self.dim();
        let mask = 1usize << qubit;
        let mut left = self.data.clone();
        for c in 0..dim {
            for i0 in (0..dim).filter(|i| i & mask == 0) {
                let i1 = i0 | mask;
                let a = self.data[(i0, c)];
                let b = self.data[(i1, c)];
                left[(i0, c)] = k[0][0] * a + k[0][1] * b;
                left[(i1, c)] = k[1][0] * a + k[1][1] * b;
            }
        }
        let mut out = left.clone();
        for j0 in (0..dim).filter(|j| j & mask == 0) {
            let j1 = j0 | mask;
            for r in 0..dim {
                let a = left[(r, j0)];
                let b = left[(r, j1)];
                out[(r, j0)] = a * k[0][0].conj() + b * k[0][1].conj();
                out[(r, j1)] = a * k[1][0].conj() + b * k[1][1].conj();
            }
        }
        out
    }

    fn apply_kraus(&self, kraus: &[Mat2], qubit: usize) -> Result<Self, QsimError> {
        self.check_qubit(qubit)?;
        let mut acc = DMatrix::zeros(self.dim(), self.dim());
        for k in kraus {
            acc += self.conjugate_local(k, qubit);
        }
        Ok(Self {
            n_qubits: self.n_qubits,
            data: acc,
        })
    }

    /// `H^{⊗n} ρ H^{⊗n}`.
    pub fn hadamard_all(&self) -> Self {
        let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let h = [[s, s], [s, -s]];
        let mut rho = self.clone();
        for q in 0..self.n_qubits {
            rho.data = rho.conjugate_local(&h, q);
        }
        rho
    }

    /// `(1 − p)ρ + (p/3)(XρX + YρY + ZρZ)` on `qubit`.
    pub fn depolarize(&self, p: f64, qubit: usize) -> Result<Self, QsimError> {
        check_probability("depolarizing_p", p)?;
        let zero = Complex64::new(0.0, 0.0);
        let a = Complex64::new((1.0 - p).sqrt(), 0.0);
        let b = (p / 3.0).sqrt();
        let re = Complex64::new(b, 0.0);
        let im = Complex64::new(0.0, b);
        let kraus = [
            [[a, zero], [zero, a]],
            [[zero, re], [re, zero]],
            [[zero, -im], [im, zero]],
            [[re, zero], [zero, -re]],
        ];
        self.apply_kraus(&kraus, qubit)
    }

    /// Amplitude damping with `K0 = [[1,0],[0,√(1−γ)]]`, `K1 = [[0,√γ],[0,0]]`.
    pub fn amplitude_damp(&self, gamma: f64, qubit: usize) -> Result<Self, QsimError> {
        check_probability("amplitude_damping_gamma", gamma)?;
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let kraus = [
            [[one, zero], [zero, Complex64::new((1.0 - gamma).sqrt(), 0.0)]],
            [[zero, Complex64::new(gamma.sqrt(), 0.0)], [zero, zero]],
        ];
        self.apply_kraus(&kraus, qubit)
    }

    /// Born-rule distribution over basis states, indexed like the basis.
    pub fn measurement_distribution(&self) -> Result<Vec<f64>, QsimError> {
        let mut probs = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let p = self.data[(i, i)].re;
            if p < -NEGATIVE_PROBABILITY_LIMIT {
                return Err(QsimError::NegativeProbability { index: i, value: p });
            }
            probs.push(p.max(0.0));
        }
        let total: f64 = probs.iter().sum();
        if total.is_nan() || total <= 0.0 || !total.is_finite() {
            return Err(QsimError::NotNormalizable);
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(probs)
    }

    /// `Tr(ρP)` for every Pauli string of weight at most `max_weight`,
    /// ordered by weight and then label.
    pub fn pauli_expectations(&self, max_weight: usize) -> Result<Vec<PauliTerm>, QsimError> {
        let n = self.n_qubits;
        if max_weight > n {
            return Err(QsimError::PauliWeight {
                max_weight,
                n_qubits: n,
            });
        }
        if n > MAX_FULL_PAULI_QUBITS && max_weight == n {
            return Err(QsimError::PauliBlowup(n));
        }
        let mut labels = Vec::new();
        enumerate_pauli_labels(n, max_weight, &mut String::with_capacity(n), 0, &mut labels);
        labels.sort_by(|a, b| pauli_weight(a).cmp(&pauli_weight(b)).then_with(|| a.cmp(b)));
        Ok(labels
            .into_iter()
            .map(|label| {
                let value = self.pauli_expectation(&label).re;
                PauliTerm { label, value }
            })
            .collect())
    }

    /// `Tr(ρP)` for a single label over `{I,X,Y,Z}`, most-significant qubit first.
    ///
    /// Panics if the label length differs from the register size or contains
    /// another character.
    pub fn pauli_expectation(&self, label: &str) -> Complex64 {
        let n = self.n_qubits;
        assert_eq!(label.len(), n, "Pauli label length must equal the qubit count");
        let mut xmask = 0usize;
        let mut zmask = 0usize;
        let mut n_y = 0u32;
        for (pos, ch) in label.chars().enumerate() {
            let bit = 1usize << (n - 1 - pos);
            match ch {
                'I' => {}
                'X' => xmask |= bit,
                'Y' => {
                    xmask |= bit;
                    zmask |= bit;
                    n_y += 1;
                }
                'Z' => zmask |= bit,
                other => panic!("invalid Pauli character {other:?}"),
            }
        }
        let phase = Complex64::new(0.0, 1.0).powu(n_y);
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..self.dim() {
            let term = self.data[(j, j ^ xmask)];
            if (j & zmask).count_ones() % 2 == 1 {
                acc -= term;
            } else {
                acc += term;
            }
        }
        acc * phase
    }

    /// Reduced single-qubit state of `qubit` (2×2, row-major).
    pub fn reduced_qubit(&self, qubit: usize) -> Result<[[Complex64; 2]; 2], QsimError> {
        self.check_qubit(qubit)?;
        let mask = 1usize << qubit;
        let mut r = [[Complex64::new(0.0, 0.0); 2]; 2];
        for rest in (0..self.dim()).filter(|i| i & mask == 0) {
            for (a, row) in r.iter_mut().enumerate() {
                for (b, entry) in row.iter_mut().enumerate() {
                    *entry += self.data[(rest | (a * mask), rest | (b * mask))];
                }
            }
        }
        Ok(r)
    }

    /// `(⟨X⟩, ⟨Y⟩, ⟨Z⟩)` of every qubit's reduced state, indexed by qubit.
    pub fn bloch_vectors(&self) -> Vec<[f64; 3]> {
        (0..self.n_qubits)
            .map(|q| {
                let r = self.reduced_qubit(q).expect("qubit in range");
                [2.0 * r[0][1].re, -2.0 * r[0][1].im, r[0][0].re - r[1][1].re]
            })
            .collect()
    }

    pub fn cityscape(&self) -> Cityscape {
        let dim = self.dim();
        let labels = (0..dim).map(|i| basis_label(i, self.n_qubits)).collect();
        let real = (0..dim)
            .map(|i| (0..dim).map(|j| self.data[(i, j)].re).collect())
            .collect();
        let imag = (0..dim)
            .map(|i| (0..dim).map(|j| self.data[(i, j)].im).collect())
            .collect();
        Cityscape { labels, real, imag }
    }
}

fn pauli_weight(label: &str) -> usize {
    label.chars().filter(|&c| c != 'I').count()
}

fn enumerate_pauli_labels(n: usize, max_weight: usize, prefix: &mut String, weight: usize, out: &mut Vec<String>) {
    if prefix.len() == n {
        out.push(prefix.clone());
        return;
    }
    for ch in ['I', 'X', 'Y', 'Z'] {
        let w = weight + usize::from(ch != 'I');
        if w > max_weight {
            continue;
        }
        prefix.push(ch);
        enumerate_pauli_labels(n, max_weight, prefix, w, out);
        prefix.pop();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub label: String,
    pub value: f64,
}

/// Real and imaginary parts of ρ with bitstring row/column labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cityscape {
    pub labels: Vec<String>,
    pub real: Vec<Vec<f64>>,
    pub imag: Vec<Vec<f64>>,
}

/// Shot counts keyed by bitstring (most-significant qubit first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeHistogram {
    pub n_qubits: usize,
    pub total_shots: u64,
    pub counts: BTreeMap<String, u64>,
}

impl OutcomeHistogram {
    pub fn from_outcomes(n_qubits: usize, outcomes: &[usize]) -> Self {
        let mut counts = BTreeMap::new();
        for &o in outcomes {
            *counts.entry(basis_label(o, n_qubits)).or_insert(0) += 1;
        }
        Self {
            n_qubits,
            total_shots: outcomes.len() as u64,
            counts,
        }
    }

    pub fn count(&self, bitstring: &str) -> u64 {
        self.counts.get(bitstring).copied().unwrap_or(0)
    }

    /// Counts for every basis state in index order, zeros included.
    pub fn dense_counts(&self) -> Vec<u64> {
        (0..1usize << self.n_qubits)
            .map(|i| self.count(&basis_label(i, self.n_qubits)))
            .collect()
    }
}

/// Number of qubits indexing a distribution of the given length.
pub fn register_size(len: usize) -> Result<usize, QsimError> {
    if !len.is_power_of_two() {
        return Err(QsimError::DistributionLength(len));
    }
    let n = len.trailing_zeros() as usize;
    if (1..=MAX_QUBITS).contains(&n) {
        Ok(n)
    } else {
        Err(QsimError::DistributionLength(len))
    }
}

/// Categorical sampler over basis indices followed by independent per-bit
/// readout flips.
#[derive(Debug, Clone)]
pub struct ShotSampler {
    n_qubits: usize,
    index: WeightedIndex<f64>,
    noise: NoiseSpec,
}

impl ShotSampler {
    pub fn new(dist: &[f64], noise: &NoiseSpec) -> Result<Self, QsimError> {
        noise.validate()?;
        let n_qubits = register_size(dist.len())?;
        let total: f64 = dist.iter().sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE || dist.iter().any(|p| *p < 0.0) {
            return Err(QsimError::DistributionSum(total));
        }
        let index = WeightedIndex::new(dist).map_err(|_| QsimError::DistributionSum(total))?;
        Ok(Self {
            n_qubits,
            index,
            noise: *noise,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// One shot: a basis index with readout errors applied.
    pub fn shot<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut outcome = self.index.sample(rng);
        if self.noise.readout_p01 > 0.0 || self.noise.readout_p10 > 0.0 {
            for q in 0..self.n_qubits {
                let bit = 1usize << q;
                let flip_p = if outcome & bit == 0 {
                    self.noise.readout_p01
                } else {
                    self.noise.readout_p10
                };
                if rng.random_bool(flip_p) {
                    outcome ^= bit;
                }
            }
        }
        outcome
    }

    pub fn shots<R: Rng + ?Sized>(&self, shots: usize, rng: &mut R) -> Vec<usize> {
        (0..shots).map(|_| self.shot(rng)).collect()
    }
}

/// Draws `shots` outcomes from `dist` with readout noise; deterministic per seed.
pub fn sample_bitstrings(
    dist: &[f64],
    shots: u64,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<OutcomeHistogram, QsimError> {
    if shots == 0 {
        return Err(QsimError::ZeroShots);
    }
    let sampler = ShotSampler::new(dist, noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcomes = sampler.shots(shots as usize, &mut rng);
    Ok(OutcomeHistogram::from_outcomes(sampler.n_qubits, &outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-10;

    fn plus_state() -> DensityMatrix {
        DensityMatrix::ground(1).unwrap().hadamard_all()
    }

    fn assert_entries(rho: &DensityMatrix, expected: &[[f64; 2]; 2]) {
        for (i, row) in expected.iter().enumerate() {
            for (j, &want) in row.iter().enumerate() {
                let got = rho.get(i, j);
                assert!(
                    (got.re - want).abs() < TOL && got.im.abs() < TOL,
                    "entry ({i},{j}) = {got}, expected {want}"
                );
            }
        }
    }

    #[test]
    fn ground_state_has_single_unit_entry() {
        for n in 1..=3 {
            let rho = DensityMatrix::ground(n).unwrap();
            assert_eq!(rho.dim(), 1 << n);
            for i in 0..rho.dim() {
                for j in 0..rho.dim() {
                    let want = if i == 0 && j == 0 { 1.0 } else { 0.0 };
                    assert_eq!(rho.get(i, j), Complex64::new(want, 0.0));
                }
            }
            assert!((rho.trace().re - 1.0).abs() < TOL);
        }
    }

    #[test]
    fn register_size_is_capped() {
        assert_eq!(DensityMatrix::ground(0), Err(QsimError::Capacity(0)));
        assert_eq!(DensityMatrix::ground(11), Err(QsimError::Capacity(11)));
        assert_eq!(CircuitSpec::new(11), Err(QsimError::Capacity(11)));
        assert!(DensityMatrix::ground(10).is_ok());
    }

    #[test]
    fn hadamard_layer_gives_uniform_entries() {
        assert_entries(&plus_state(), &[[0.5, 0.5], [0.5, 0.5]]);
        let rho = DensityMatrix::ground(3).unwrap().hadamard_all();
        for i in 0..8 {
            for j in 0..8 {
                assert!((rho.get(i, j) - Complex64::new(0.125, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn hadamard_is_an_involution() {
        let ground = DensityMatrix::ground(3).unwrap();
        let twice = ground.hadamard_all().hadamard_all();
        let diff = (twice.matrix() - ground.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "diff {diff}");
    }

    #[test]
    fn depolarizing_examples() {
        let plus = plus_state();
        assert_eq!(plus.depolarize(0.0, 0).unwrap().matrix(), plus.matrix());
        assert_entries(&plus.depolarize(0.75, 0).unwrap(), &[[0.5, 0.0], [0.0, 0.5]]);
        assert_entries(&plus.depolarize(0.3, 0).unwrap(), &[[0.5, 0.3], [0.3, 0.5]]);
    }

    #[test]
    fn amplitude_damping_examples() {
        let plus = plus_state();
        assert_entries(&plus.amplitude_damp(1.0, 0).unwrap(), &[[1.0, 0.0], [0.0, 0.0]]);
        assert_eq!(plus.amplitude_damp(0.0, 0).unwrap().matrix(), plus.matrix());
        let c = 0.5 * 0.5f64.sqrt();
        assert_entries(&plus.amplitude_damp(0.5, 0).unwrap(), &[[0.75, c], [c, 0.25]]);
    }

    #[test]
    fn channels_reject_bad_probabilities() {
        let plus = plus_state();
        assert!(matches!(plus.depolarize(1.5, 0), Err(QsimError::Probability { .. })));
        assert!(matches!(plus.depolarize(-0.1, 0), Err(QsimError::Probability { .. })));
        assert!(matches!(
            plus.amplitude_damp(2.0, 0),
            Err(QsimError::Probability { .. })
        ));
        assert!(matches!(plus.depolarize(0.1, 1), Err(QsimError::QubitIndex { .. })));
        let bad = NoiseSpec {
            readout_p10: 1.01,
            ..NoiseSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn measurement_distribution_examples() {
        let rho = DensityMatrix::ground(3).unwrap().hadamard_all();
        for p in rho.measurement_distribution().unwrap() {
            assert!((p - 0.125).abs() < 1e-12);
        }
        let ground = DensityMatrix::ground(3).unwrap().measurement_distribution().unwrap();
        assert_eq!(ground[0], 1.0);
        assert!(ground[1..].iter().all(|p| *p == 0.0));
        let dep = plus_state().depolarize(0.3, 0).unwrap();
        let d = dep.measurement_distribution().unwrap();
        assert!((d[0] - 0.5).abs() < TOL && (d[1] - 0.5).abs() < TOL);
    }

    #[test]
    fn measurement_rejects_corrupt_diagonals() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = Complex64::new(1.0 + 1e-6, 0.0);
        m[(1, 1)] = Complex64::new(-1e-6, 0.0);
        let rho = DensityMatrix::from_matrix(1, m).unwrap();
        assert!(matches!(
            rho.measurement_distribution(),
            Err(QsimError::NegativeProbability { index: 1, .. })
        ));

        let mut dust = DMatrix::zeros(2, 2);
        dust[(0, 0)] = Complex64::new(1.0, 0.0);
        dust[(1, 1)] = Complex64::new(-1e-12, 0.0);
        let d = DensityMatrix::from_matrix(1, dust)
            .unwrap()
            .measurement_distribution()
            .unwrap();
        assert_eq!(d, vec![1.0, 0.0]);

        let zero = DensityMatrix::from_matrix(1, DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(zero.measurement_distribution(), Err(QsimError::NotNormalizable));
    }

    #[test]
    fn sampling_examples() {
        let mut point = vec![0.0; 8];
        point[0] = 1.0;
        let h = sample_bitstrings(&point, 100, &NoiseSpec::noiseless(), 1).unwrap();
        assert_eq!(h.count("000"), 100);
        assert_eq!(h.total_shots, 100);

        let flip_all = NoiseSpec {
            readout_p01: 1.0,
            ..NoiseSpec::noiseless()
        };
        let h = sample_bitstrings(&[1.0, 0.0], 50, &flip_all, 9).unwrap();
        assert_eq!(h.count("1"), 50);
        assert_eq!(h.counts.len(), 1);
    }

    #[test]
    fn uniform_sampling_stays_within_four_sigma() {
        let uniform = vec![0.125; 8];
        let shots = 80_000u64;
        let h = sample_bitstrings(&uniform, shots, &NoiseSpec::noiseless(), 2024).unwrap();
        let sigma = (shots as f64 * 0.125 * 0.875).sqrt();
        for c in h.dense_counts() {
            assert!((c as f64 - 10_000.0).abs() <= 4.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn sampling_rejects_bad_input() {
        let uniform = vec![0.5, 0.5];
        let noise = NoiseSpec::noiseless();
        assert_eq!(sample_bitstrings(&uniform, 0, &noise, 0), Err(QsimError::ZeroShots));
        assert!(matches!(
            sample_bitstrings(&[0.5, 0.4], 10, &noise, 0),
            Err(QsimError::DistributionSum(_))
        ));
        assert!(matches!(
            sample_bitstrings(&[0.5, 0.25, 0.25], 10, &noise, 0),
            Err(QsimError::DistributionLength(3))
        ));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let dist = CircuitSpec::new(3)
            .unwrap()
            .noisy_state(&NoiseSpec::default())
            .unwrap()
            .measurement_distribution()
            .unwrap();
        let a = sample_bitstrings(&dist, 5000, &NoiseSpec::default(), 77).unwrap();
        let b = sample_bitstrings(&dist, 5000, &NoiseSpec::default(), 77).unwrap();
        let c = sample_bitstrings(&dist, 5000, &NoiseSpec::default(), 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn pauli_examples() {
        let plus = plus_state();
        let terms = plus.pauli_expectations(1).unwrap();
        let get = |terms: &[PauliTerm], l: &str| terms.iter().find(|t| t.label == l).unwrap().value;
        assert!((get(&terms, "I") - 1.0).abs() < TOL);
        assert!((get(&terms, "X") - 1.0).abs() < TOL);
        assert!(get(&terms, "Y").abs() < TOL);
        assert!(get(&terms, "Z").abs() < TOL);

        let mixed = plus.depolarize(0.75, 0).unwrap().pauli_expectations(1).unwrap();
        for l in ["X", "Y", "Z"] {
            assert!(get(&mixed, l).abs() < TOL);
        }

        let damped = plus.amplitude_damp(0.5, 0).unwrap().pauli_expectations(1).unwrap();
        assert!((get(&damped, "X") - 0.5f64.sqrt()).abs() < TOL);
        assert!((get(&damped, "Z") - 0.5).abs() < TOL);
    }

    #[test]
    fn pauli_enumeration_limits() {
        let rho5 = CircuitSpec::new(5).unwrap().noisy_state(&NoiseSpec::default()).unwrap();
        assert_eq!(rho5.pauli_expectations(5), Err(QsimError::PauliBlowup(5)));
        assert!(matches!(rho5.pauli_expectations(6), Err(QsimError::PauliWeight { .. })));
        assert_eq!(rho5.pauli_expectations(1).unwrap().len(), 1 + 3 * 5);
        let rho3 = CircuitSpec::new(3).unwrap().noisy_state(&NoiseSpec::default()).unwrap();
        let full = rho3.pauli_expectations(3).unwrap();
        assert_eq!(full.len(), 64);
        assert_eq!(full[0].label, "III");
        for t in &full {
            assert!(t.value.abs() <= 1.0 + TOL);
            assert!(rho3.pauli_expectation(&t.label).im.abs() < TOL);
        }
    }

    #[test]
    fn pauli_label_order_matches_qubit_order() {
        // Damp only qubit 0 (the rightmost label character).
        let rho = DensityMatrix::ground(2)
            .unwrap()
            .hadamard_all()
            .amplitude_damp(1.0, 0)
            .unwrap();
        assert!((rho.pauli_expectation("IZ").re - 1.0).abs() < TOL);
        assert!(rho.pauli_expectation("ZI").re.abs() < TOL);
        assert!((rho.pauli_expectation("XI").re - 1.0).abs() < TOL);
    }

    #[test]
    fn bloch_examples() {
        let rho = DensityMatrix::ground(3).unwrap().hadamard_all();
        for v in rho.bloch_vectors() {
            assert!((v[0] - 1.0).abs() < TOL && v[1].abs() < TOL && v[2].abs() < TOL);
        }
        for v in DensityMatrix::ground(2).unwrap().bloch_vectors() {
            assert_eq!(v, [0.0, 0.0, 1.0]);
        }
        let v = plus_state().depolarize(0.3, 0).unwrap().bloch_vectors()[0];
        assert!((v[0] - 0.6).abs() < TOL && v[1].abs() < TOL && v[2].abs() < TOL);
    }

    #[test]
    fn bloch_y_component_sign() {
        // S|+> = |+i> has Bloch vector (0, 1, 0).
        let half = Complex64::new(0.5, 0.0);
        let mut m = DMatrix::from_element(2, 2, half);
        m[(0, 1)] = Complex64::new(0.0, -0.5);
        m[(1, 0)] = Complex64::new(0.0, 0.5);
        let rho = DensityMatrix::from_matrix(1, m).unwrap();
        let v = rho.bloch_vectors()[0];
        assert!((v[1] - 1.0).abs() < TOL, "{v:?}");
        assert!((rho.pauli_expectation("Y").re - 1.0).abs() < TOL);
    }

    #[test]
    fn cityscape_examples() {
        let c = DensityMatrix::ground(1).unwrap().cityscape();
        assert_eq!(c.labels, vec!["0", "1"]);
        assert_eq!(c.real, vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(c.imag, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        let c = DensityMatrix::ground(3).unwrap().hadamard_all().cityscape();
        assert_eq!(c.labels[5], "101");
        assert!(c.real.iter().flatten().all(|v| (v - 0.125).abs() < 1e-12));
        assert!(c.imag.iter().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn noisy_default_diagonal_is_a_product_of_damped_marginals() {
        // Depolarizing leaves |+> populations alone; damping moves γ/2 of the
        // weight to |0>, so each diagonal entry is a product of 0.515 / 0.485.
        let rho = CircuitSpec::new(3).unwrap().noisy_state(&NoiseSpec::default()).unwrap();
        let c = rho.cityscape();
        for (i, label) in c.labels.iter().enumerate() {
            let ones = label.chars().filter(|&b| b == '1').count() as i32;
            let want = 0.515f64.powi(3 - ones) * 0.485f64.powi(ones);
            assert!((c.real[i][i] - want).abs() < 1e-12, "{label}");
        }
    }
}
