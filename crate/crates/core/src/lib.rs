//! Position encodings for time-series transformers and the ConvTran
//! classifier, CPU-only and in double precision throughout.
//!
//! The crate provides:
//!
//! - absolute position encodings: fixed sinusoidal tables, learned
//!   tables, and tAPE (frequencies rescaled by `d_model / L`), plus the
//!   similarity-curve analysis used to compare them
//!   ([`encoding::absolute`]);
//! - relative position encodings: the per-head scalar bias eRPE with
//!   its `2L-1` gather indexing, and the Shaw and skewed-vector
//!   baselines with their parameter/memory accounting
//!   ([`encoding::relative`]);
//! - multi-head self-attention with pluggable relative biases
//!   ([`attention`]);
//! - the ConvTran network: disjoint temporal/spatial convolution
//!   embedding, tAPE injection, a transformer block with eRPE, and a
//!   pooled classification head ([`model`]);
//! - a small reverse-mode autodiff engine ([`autodiff`]), Adam and
//!   early stopping ([`optim`]);
//! - UEA `.ts` parsing, normalization, splits, and synthetic tasks
//!   ([`data`]);
//! - a training/evaluation harness with accuracy and average-rank
//!   reporting ([`train`], [`harness`]).
//!
//! Batch-level work is data-parallel via rayon behind the `parallel`
//! feature (on by default); reductions are ordered, so results are
//! bit-identical with the feature off.

pub mod attention;
pub mod autodiff;
pub mod data;
pub mod encoding;
pub mod error;
pub mod harness;
pub mod model;
pub mod optim;
pub mod parallel;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// Deterministic RNG used everywhere a seed appears in an interface.
pub fn rng_from_seed(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream from a base seed and a stream label,
/// so per-sample randomness does not depend on scheduling.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined value.
    let mut z = base ^ stream.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
