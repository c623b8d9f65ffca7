//! Seeded random number generation.
//!
//! All randomized operations use [`Rng`], the PCG XSL RR 128/64 generator
//! (`rand_pcg::Pcg64`), seeded through `SeedableRng::seed_from_u64`. Independent
//! streams (per tree, per repeat, per synthetic cow) are derived with
//! [`derive_seed`], a SplitMix64 mix of the base seed and the stream index, so
//! that serial and parallel execution consume identical streams.

use rand::{Rng as _, SeedableRng};

pub type Rng = rand_pcg::Pcg64;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `stream` of a computation seeded with `base`.
#[inline]
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream.wrapping_add(0x6A09_E667_F3BC_C909)))
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn stream(base: u64, stream: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(base, stream))
}

/// Uniform index in `0..n` (n > 0), sampled as `u64` so the draw is identical
/// on 32- and 64-bit targets.
#[inline]
pub fn index(rng: &mut Rng, n: usize) -> usize {
    rng.random_range(0..n as u64) as usize
}

/// Uniform `f64` in `[0, 1)`.
#[inline]
pub fn unit(rng: &mut Rng) -> f64 {
    rng.random::<f64>()
}

/// Fisher-Yates shuffle driven by [`index`].
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}

/// Standard normal deviate.
#[inline]
pub fn normal(rng: &mut Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}
