//! Seeded random streams.
//!
//! Every stochastic stage derives its own ChaCha stream from a root seed and a
//! stream label, so results do not depend on evaluation order. Uniform and
//! normal draws are generated from the raw 64-bit output directly, keeping
//! sample sequences bit-reproducible across platforms for both `f32` and
//! `f64` runs.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::scalar::Scalar;

/// The RNG used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Root stream for a seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent child seed from a root seed and labels.
///
/// SplitMix64 finalizer over the concatenated words; collisions between
/// distinct label tuples are as unlikely as 64-bit hash collisions.
pub fn derive_seed(root: u64, labels: &[u64]) -> u64 {
    let mut h = root ^ 0x9e37_79b9_7f4a_7c15;
    for &l in labels {
        h ^= l.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = splitmix64(h);
    }
    splitmix64(h)
}

/// Child stream for (root seed, labels).
pub fn substream(root: u64, labels: &[u64]) -> Stream {
    stream(derive_seed(root, labels))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw in [0, 1) with 53 bits of precision.
pub fn uniform<T: Scalar, R: RngCore>(rng: &mut R) -> T {
    T::of((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
}

/// Uniform integer in [lo, hi] inclusive.
pub fn uniform_usize<R: RngCore>(rng: &mut R, lo: usize, hi: usize) -> usize {
    debug_assert!(lo <= hi);
    let span = (hi - lo + 1) as u64;
    lo + (rng.next_u64() % span) as usize
}

/// Standard normal draw via Box-Muller.
pub fn normal<T: Scalar, R: RngCore>(rng: &mut R) -> T {
    let u1: f64 = ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64).max(f64::MIN_POSITIVE);
    let u2: f64 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    T::of((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos())
}

/// Vector of standard normal draws.
pub fn normal_vec<T: Scalar, R: RngCore>(rng: &mut R, d: usize) -> Vec<T> {
    (0..d).map(|_| normal(rng)).collect()
}

/// Rademacher (+1/-1) probe vector.
pub fn rademacher_vec<T: Scalar, R: RngCore>(rng: &mut R, d: usize) -> Vec<T> {
    (0..d)
        .map(|_| if rng.next_u64() & 1 == 0 { T::one() } else { -T::one() })
        .collect()
}

/// Fisher-Yates shuffle of indices 0..n.
pub fn shuffled_indices<R: RngCore>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = uniform_usize(rng, 0, i);
        idx.swap(i, j);
    }
    idx
}
