//! Seedable random streams.
//!
//! All stochastic code in the crate draws from ChaCha12, seeded either
//! directly or through [`replica_stream`], which mixes a base seed with a
//! replica index (SplitMix64 finalizer) so that concurrently running
//! replicas use statistically independent, individually reproducible
//! streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Stream = ChaCha12Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Derived stream for replica `index` of an experiment seeded with `seed`.
pub fn replica_stream(seed: u64, index: u64) -> Stream {
    ChaCha12Rng::seed_from_u64(replica_seed(seed, index))
}

/// The u64 seed behind [`replica_stream`], for APIs that take seeds.
pub fn replica_seed(seed: u64, index: u64) -> u64 {
    mix(seed, index)
}

fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Exponential variate with the given rate, by inversion.
pub fn exp_variate<R: rand::Rng>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    let u = if u <= 0.0 { f64::MIN_POSITIVE } else { u };
    -u.ln() / rate
}
