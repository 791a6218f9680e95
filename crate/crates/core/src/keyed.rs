//! Counter-based randomness and the hash primitives shared by every module.
//!
//! A random draw is a pure function of `(seed, key, trial)`, so the same
//! document always sees the same coin regardless of which worker visits it
//! or in which order.

use xxhash_rust::xxh3::{xxh3_128_with_seed, xxh3_64_with_seed};

/// Stream tags keep draws for different purposes uncorrelated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Uniform = 0x75_6e_69_66,
    Cluster = 0x63_6c_75_73,
    Count = 0x63_6f_75_6e,
    Shuffle = 0x73_68_75_66,
    Member = 0x6d_65_6d_62,
}

/// SplitMix64 finalizer; a bijection on u64 with full avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub fn hash64(bytes: &[u8], seed: u64) -> u64 {
    xxh3_64_with_seed(bytes, seed)
}

#[inline]
pub fn hash128(bytes: &[u8], seed: u64) -> u128 {
    xxh3_128_with_seed(bytes, seed)
}

/// Raw 64 random bits for `(seed, stream, key, trial)`.
pub fn bits(seed: u64, stream: Stream, key: &str, trial: u64) -> u64 {
    let h = hash64(key.as_bytes(), seed ^ mix64(stream as u64));
    mix64(h ^ mix64(trial.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub fn unit(seed: u64, stream: Stream, key: &str, trial: u64) -> f64 {
    (bits(seed, stream, key, trial) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
