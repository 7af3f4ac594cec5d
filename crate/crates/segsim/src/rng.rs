//! Deterministic random-number plumbing.
//!
//! Every stochastic component in the crate draws from a [`SimRng`] seeded
//! from a single `u64`, so a run is fully reproducible from its config.

use rand::SeedableRng;

/// The one RNG type used throughout a simulation.
pub type SimRng = rand_chacha::ChaCha12Rng;

/// Build the simulation RNG for a given seed.
pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Derive an independent per-cell seed for a sweep from the base seed and
/// the cell's (alpha, cost, replicate) indices.
///
/// The rule is fixed so that any cell can be re-run on its own: combine the
/// four values with distinct odd multipliers, then apply the SplitMix64
/// finalizer. Cells with different indices land in unrelated streams.
pub fn split_seed(base: u64, alpha_idx: u64, cost_idx: u64, seed_idx: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(alpha_idx.wrapping_add(1)))
        .wrapping_add(0xBF58_476D_1CE4_E5B9u64.wrapping_mul(cost_idx.wrapping_add(1)))
        .wrapping_add(0x94D0_49BB_1331_11EBu64.wrapping_mul(seed_idx.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
