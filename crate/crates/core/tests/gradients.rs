//! Backpropagation against central finite differences.

mod support;

use nalgebra::DMatrix;
use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use qgan_core::autonet::{Activation, DenseNet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::fd::{self, Objective};

#[test]
fn twenty_random_nets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..20 {
        let (net, x, objective) = fd::random_case(&mut rng);
        let out = fd::check(&net, &x, &objective);
        assert!(out.parameters <= 60);
        assert!(out.worst_relative < 1e-4, "case {case}: {}", out.worst_relative);
        assert!(fd::check_input(&net, &x, &objective) < 1e-4, "case {case} input");
    }
}

#[test]
fn generator_shaped_net_with_tanh_head() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let acts = [Activation::LeakyRelu(0.2), Activation::LeakyRelu(0.2), Activation::Tanh];
    let net = DenseNet::init(&[3, 6, 5, 4], &acts, 0.5, &mut rng);
    let x = DMatrix::from_fn(4, 3, |r, c| if (r + c) % 2 == 0 { 1.0 } else { -1.0 });
    let r = DMatrix::from_fn(4, 4, |i, j| 0.1 * (i as f64) - 0.05 * (j as f64));
    let out = fd::check(&net, &x, &Objective::Quadratic(r));
    assert!(out.worst_relative < 1e-4, "{}", out.worst_relative);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradients_match_differences(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (net, x, objective) = fd::random_case(&mut rng);
        // Smooth heads only: a ReLU kink within one step of a pre-activation
        // makes the difference quotient itself wrong.
        let smooth = net.layers().iter().all(|l| !matches!(l.activation, Activation::Relu | Activation::LeakyRelu(_)));
        if smooth {
            prop_assert!(fd::check(&net, &x, &objective).worst_relative < 1e-4);
        }
    }
}
