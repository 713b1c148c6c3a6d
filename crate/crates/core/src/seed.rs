//! Deterministic derivation of independent RNG streams from one master seed.
//!
//! Every stochastic component takes a label so that reordering or adding
//! components never shifts another component's stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a child seed from a master seed and a stream label.
pub fn derive(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, then splitmix64 to decorrelate from the master.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in label.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(master ^ h)
}

/// splitmix64 finalizer; bijective on u64.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// A seeded RNG for the stream identified by `label`.
pub fn rng(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, label))
}

/// A seeded RNG for an indexed stream, e.g. one per clip or per epoch.
pub fn rng_indexed(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(derive(master, label) ^ splitmix64(index)))
}
