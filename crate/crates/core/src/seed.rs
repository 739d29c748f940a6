//! Deterministic seed derivation.
//!
//! Every stochastic component (data generation, fold shuffling, resampling,
//! weight init, dropout) receives its own u64 seed derived from a base seed
//! and a stream index, so independent tasks can run in any order — or in
//! parallel — without sharing RNG state.

/// SplitMix64 finalizer. Fixed constants from the reference implementation.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from `base`.
///
/// Distinct `stream` values give statistically independent seeds; the map is
/// pure, so callers may derive the same seed from multiple threads.
pub fn split_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}
