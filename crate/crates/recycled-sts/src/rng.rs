//! Deterministic, splittable random-number streams.
//!
//! Every stochastic component draws from a ChaCha generator derived from the
//! run seed plus a short integer path: a domain tag followed by indices such
//! as (cell, replicate) or (replicate, attempt, individual). Each work item
//! owns its stream, so results do not depend on scheduling, and a given
//! (seed, path) always reproduces the same draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags separating unrelated stream families under one seed.
pub mod domain {
    /// Dataset generation for a Monte Carlo replicate.
    pub const DATASET: u64 = 1;
    /// Stage I* inner weights, per (replicate, attempt, individual).
    pub const INNER_WEIGHTS: u64 = 2;
    /// Stage II* outer weights, per (replicate, attempt).
    pub const OUTER_WEIGHTS: u64 = 3;
    /// Per-replicate bootstrap base seeds inside simulation experiments.
    pub const BOOTSTRAP: u64 = 4;
    /// CLT diagnostics (sampling-distribution replicates).
    pub const CLT: u64 = 5;
    /// Multistart perturbations inside the NLS solver.
    pub const MULTISTART: u64 = 6;
    /// Weight-scheme moment diagnostics.
    pub const WEIGHT_CHECK: u64 = 7;
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// One SplitMix64 step: advances `state` and returns a scrambled output.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapses (seed, path) into a single 64-bit key.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    let mut h = seed ^ 0x517c_c1b7_2722_0a95_u64.rotate_left(1);
    let mut s = h;
    h ^= splitmix64(&mut s);
    for &p in path {
        let mut q = p ^ GOLDEN;
        h ^= splitmix64(&mut q);
        let mut s = h;
        h = splitmix64(&mut s) ^ h.rotate_left(23);
    }
    h
}

/// A ChaCha stream keyed by (seed, path); the 256-bit key is expanded from
/// the derived 64-bit state by further SplitMix64 steps.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = derive(seed, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// FNV-1a hash of an individual id, used to key per-individual streams so
/// that resampling results do not depend on storage order.
pub fn id_key(id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
