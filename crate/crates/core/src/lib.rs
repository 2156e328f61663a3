pub mod autonet;
pub mod dataset;
pub mod gan;
pub mod latent;
pub mod metrics;
pub mod qsim;
pub mod rng;
pub mod viz;
