//! Seed fan-out: one master seed, independent named streams.
//!
//! Every source of randomness (weight init, dropout, batch shuffling,
//! negative sampling, ...) draws from its own stream derived from the master
//! seed and a label, so adding draws to one consumer never perturbs another.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::scalar::Scalar;

/// Derives a 64-bit sub-seed from `(master, label)`.
pub fn subseed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// A seeded RNG for the named stream.
pub fn seeded(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(subseed(master, label))
}

/// Uniform sample in `[lo, hi)`, drawn in f64 and narrowed to `S` so the
/// stream of raw draws is identical across scalar types.
pub fn uniform<S: Scalar>(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> S {
    S::from_f64(rng.gen_range(lo..hi))
}
