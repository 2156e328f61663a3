//! Central finite differences over every parameter of a small dense net.

#![allow(dead_code)]

use nalgebra::DMatrix;
use qgan_core::autonet::{bce_grad, bce_loss, Activation, DenseNet};
use rand::Rng;

pub const STEP: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-8;

/// Scalar objective on the network output together with `∂L/∂output`.
#[derive(Debug, Clone)]
pub enum Objective {
    /// `Σ r ⊙ y + ½ Σ y²`.
    Quadratic(DMatrix<f64>),
    /// Binary cross-entropy against fixed targets; needs a sigmoid head.
    Bce(Vec<f64>),
}

impl Objective {
    pub fn value(&self, y: &DMatrix<f64>) -> f64 {
        match self {
            Objective::Quadratic(r) => r.component_mul(y).sum() + 0.5 * y.norm_squared(),
            Objective::Bce(t) => bce_loss(y.as_slice(), t),
        }
    }

    pub fn upstream(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Objective::Quadratic(r) => r + y,
            Objective::Bce(t) => DMatrix::from_vec(y.nrows(), y.ncols(), bce_grad(y.as_slice(), t)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FdOutcome {
    pub parameters: usize,
    pub worst_relative: f64,
}

/// `|a − n| / max(|a|, |n|)`, or 0 when the absolute gap is under the floor.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let gap = (analytic - numeric).abs();
    if gap <= ABS_FLOOR {
        0.0
    } else {
        gap / analytic.abs().max(numeric.abs())
    }
}

pub fn check(net: &DenseNet, x: &DMatrix<f64>, objective: &Objective) -> FdOutcome {
    let cache = net.forward(x).unwrap();
    let upstream = objective.upstream(cache.output());
    let (grads, _) = net.backward(&cache, &upstream).unwrap();
    let analytic = grads.flatten();
    assert_eq!(analytic.len(), net.parameter_count());
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let base = probe.param(i);
        probe.set_param(i, base + STEP);
        let up = objective.value(&probe.predict(x).unwrap());
        probe.set_param(i, base - STEP);
        let down = objective.value(&probe.predict(x).unwrap());
        probe.set_param(i, base);
        worst = worst.max(relative_error(a, (up - down) / (2.0 * STEP)));
    }
    FdOutcome {
        parameters: analytic.len(),
        worst_relative: worst,
    }
}

/// One to three layers of width one to four, so at most 60 parameters.
pub fn random_case<R: Rng>(rng: &mut R) -> (DenseNet, DMatrix<f64>, Objective) {
    let depth = rng.random_range(1..=3);
    let mut dims = vec![rng.random_range(1..=4)];
    for _ in 0..depth {
        dims.push(rng.random_range(1..=4));
    }
    let hidden = [
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::LeakyRelu(0.2),
        Activation::Relu,
        Activation::Identity,
    ];
    let mut acts: Vec<Activation> = (0..depth - 1)
        .map(|_| hidden[rng.random_range(0..hidden.len())])
        .collect();
    let bce = rng.random::<bool>();
    acts.push(if bce { Activation::Sigmoid } else { Activation::Tanh });
    let mut net = DenseNet::init(&dims, &acts, 0.8, rng);
    for i in 0..net.parameter_count() {
        let v = net.param(i);
        net.set_param(i, v + rng.random_range(-0.3..0.3));
    }
    let batch = rng.random_range(1..=5);
    let x = DMatrix::from_fn(batch, dims[0], |_, _| rng.random_range(-1.5..1.5));
    let out = *dims.last().unwrap();
    let objective = if bce {
        Objective::Bce((0..batch * out).map(|_| f64::from(rng.random_range(0..2u8))).collect())
    } else {
        Objective::Quadratic(DMatrix::from_fn(batch, out, |_, _| rng.random_range(-1.0..1.0)))
    };
    (net, x, objective)
}

/// Worst relative error of `∂L/∂x` against central differences in the input.
pub fn check_input(net: &DenseNet, x: &DMatrix<f64>, objective: &Objective) -> f64 {
    let cache = net.forward(x).unwrap();
    let upstream = objective.upstream(cache.output());
    let (_, dx) = net.backward(&cache, &upstream).unwrap();
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let base = probe[i];
        probe[i] = base + STEP;
        let up = objective.value(&net.predict(&probe).unwrap());
        probe[i] = base - STEP;
        let down = objective.value(&net.predict(&probe).unwrap());
        probe[i] = base;
        worst = worst.max(relative_error(dx[i], (up - down) / (2.0 * STEP)));
    }
    worst
}
