//! Seed derivation and deterministic random streams.
//!
//! Every random draw in a simulation comes from a ChaCha stream whose seed is a
//! pure function of the master seed and a path of integers (component tag, node
//! id, round index). Draws therefore never depend on execution order or thread
//! count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream used throughout the crate.
pub type Stream = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a path of integers.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(master), |acc, &p| mix64(acc ^ mix64(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}

/// Like [`derive_seed`] but restricted to 63 bits so the value survives
/// round-tripping through formats with signed 64-bit integers (TOML).
pub fn derive_seed63(master: u64, path: &[u64]) -> u64 {
    derive_seed(master, path) & (i64::MAX as u64)
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream owned by `node` during `round`.
pub fn node_round_stream(master: u64, node: usize, round: usize) -> Stream {
    stream(derive_seed(master, &[tags::NODE_ROUND, node as u64, round as u64]))
}

/// Component tags for [`derive_seed`] paths.
pub mod tags {
    pub const TOPOLOGY: u64 = 1;
    pub const ADVERSARY: u64 = 2;
    pub const DATASET: u64 = 3;
    pub const PARTITION: u64 = 4;
    pub const INIT_PARAMS: u64 = 5;
    pub const NODE_ROUND: u64 = 6;
    pub const SWEEP_POINT: u64 = 7;
}
