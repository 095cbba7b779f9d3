//! Deterministic seed derivation.
//!
//! Every random choice in the pipeline draws from a ChaCha8 stream whose seed
//! is derived here. Derivations are pure functions of the inputs, so outputs
//! never depend on thread scheduling or platform hasher state.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

/// FNV-1a over the bytes of a stage name. Stable across platforms and
/// releases, unlike `DefaultHasher`.
pub fn stable_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// splitmix64 finalizer; mixes a counter into a seed.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a named pipeline stage under one global seed.
pub fn stage_seed(global_seed: u64, stage: &str) -> u64 {
    mix(global_seed ^ stable_hash(stage))
}

/// Seed for the `index`-th substream of a stage seed.
pub fn substream(seed: u64, index: u64) -> u64 {
    mix(seed.wrapping_add(mix(index)))
}

/// Seed for a two-level substream, e.g. (domain, epoch).
pub fn substream2(seed: u64, a: u64, b: u64) -> u64 {
    substream(substream(seed, a), b)
}

/// ChaCha8 generator for a derived seed.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
