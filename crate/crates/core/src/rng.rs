//! Deterministic randomness.
//!
//! Every random draw in the crate goes through [`SplitMix64`] seeded from a
//! 64-bit value, so sketches, synthetic data and weight initialisation are
//! reproducible across platforms. Sub-seeds for named components (one sketch
//! per modality, one initialiser per stream) come from [`derive_seed`].

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
pub use rand_xoshiro::SplitMix64;

pub fn seeded(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

/// Stable sub-seed for a named component: FNV-1a over `label`, folded with
/// `base` and passed through the SplitMix64 finaliser.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h ^ base.rotate_left(29) ^ 0x9e37_79b9_7f4a_7c15)
}

pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform integer in `0..n` by the multiply-shift map of one 64-bit draw.
/// `n` must be non-zero.
pub fn below(rng: &mut SplitMix64, n: u32) -> u32 {
    ((u128::from(rng.next_u64()) * u128::from(n)) >> 64) as u32
}

/// Fair sign from the top bit of one 64-bit draw.
pub fn sign(rng: &mut SplitMix64) -> i8 {
    if rng.next_u64() >> 63 == 0 {
        1
    } else {
        -1
    }
}

pub fn uniform(rng: &mut SplitMix64) -> f64 {
    rng.random::<f64>()
}

pub fn normal(rng: &mut SplitMix64) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_vec(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}
