//! Reference channel evaluation by brute force: every single-qubit operator is
//! lifted to the full register with Kronecker products and the Kraus sum
//! `Σ K ρ K†` is formed with dense matrix products.

#![allow(dead_code)]

use nalgebra::{Complex, DMatrix};

pub type C = Complex<f64>;

pub fn c(re: f64, im: f64) -> C {
    Complex::new(re, im)
}

pub fn op(entries: [[C; 2]; 2]) -> DMatrix<C> {
    DMatrix::from_fn(2, 2, |r, col| entries[r][col])
}

pub fn identity(dim: usize) -> DMatrix<C> {
    DMatrix::identity(dim, dim)
}

pub fn pauli_x() -> DMatrix<C> {
    op([[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]])
}

pub fn pauli_y() -> DMatrix<C> {
    op([[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]])
}

pub fn pauli_z() -> DMatrix<C> {
    op([[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]])
}

pub fn hadamard() -> DMatrix<C> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    op([[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]])
}

/// Qubit `q` is bit `q` of the basis index, so it sits `q` factors from the
/// right of the Kronecker product.
pub fn lift(single: &DMatrix<C>, qubit: usize, n_qubits: usize) -> DMatrix<C> {
    let left = identity(1 << (n_qubits - 1 - qubit));
    let right = identity(1 << qubit);
    left.kronecker(single).kronecker(&right)
}

pub fn depolarizing_kraus(p: f64) -> Vec<DMatrix<C>> {
    let s = (p / 3.0).sqrt();
    vec![
        identity(2) * c((1.0 - p).sqrt(), 0.0),
        pauli_x() * c(s, 0.0),
        pauli_y() * c(s, 0.0),
        pauli_z() * c(s, 0.0),
    ]
}

pub fn damping_kraus(gamma: f64) -> Vec<DMatrix<C>> {
    vec![
        op([[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c((1.0 - gamma).sqrt(), 0.0)]]),
        op([[c(0.0, 0.0), c(gamma.sqrt(), 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]),
    ]
}

pub fn apply(kraus: &[DMatrix<C>], qubit: usize, n_qubits: usize, rho: &DMatrix<C>) -> DMatrix<C> {
    let dim = rho.nrows();
    let mut out = DMatrix::zeros(dim, dim);
    for k in kraus {
        let full = lift(k, qubit, n_qubits);
        out += &full * rho * full.adjoint();
    }
    out
}

pub fn ground(n_qubits: usize) -> DMatrix<C> {
    let dim = 1 << n_qubits;
    let mut rho = DMatrix::zeros(dim, dim);
    rho[(0, 0)] = c(1.0, 0.0);
    rho
}

pub fn hadamard_layer(rho: &DMatrix<C>, n_qubits: usize) -> DMatrix<C> {
    let mut u = identity(1);
    for _ in 0..n_qubits {
        u = u.kronecker(&hadamard());
    }
    &u * rho * u.adjoint()
}

pub fn plus_state() -> DMatrix<C> {
    hadamard_layer(&ground(1), 1)
}

/// Hadamard layer, depolarizing on every qubit, then damping on every qubit.
pub fn pipeline(n_qubits: usize, p: f64, gamma: f64) -> DMatrix<C> {
    let mut rho = hadamard_layer(&ground(n_qubits), n_qubits);
    for q in 0..n_qubits {
        rho = apply(&depolarizing_kraus(p), q, n_qubits, &rho);
    }
    for q in 0..n_qubits {
        rho = apply(&damping_kraus(gamma), q, n_qubits, &rho);
    }
    rho
}

/// Tr(ρ σ) for a single-qubit Pauli acting on `qubit`.
pub fn expectation(rho: &DMatrix<C>, single: &DMatrix<C>, qubit: usize, n_qubits: usize) -> C {
    (rho * lift(single, qubit, n_qubits)).trace()
}

pub fn max_entry_diff(a: &DMatrix<C>, b: &DMatrix<C>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
