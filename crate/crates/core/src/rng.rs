//! Seeded random streams.
//!
//! A run owns one base seed. Independent sub-streams are derived per
//! `(purpose, region)` so that reordering work across independent regions
//! never changes the draws any region sees.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// What a random stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u64)]
pub enum StreamKind {
    /// Deferred-forwarding jitter drawn by leaders.
    Jitter = 1,
    /// Loss draws on jammed link classes.
    Jam = 2,
    /// Scenario generation and Monte-Carlo failure draws.
    Failures = 3,
    /// Random adjacency construction.
    Topology = 4,
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the sub-stream for `(kind, scope)` under `base`.
pub fn derive_seed(base: u64, kind: StreamKind, scope: u64) -> u64 {
    mix64(mix64(base ^ mix64(kind as u64)) ^ scope)
}

pub fn stream(base: u64, kind: StreamKind, scope: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, kind, scope))
}

/// Seed of Monte-Carlo trial `index` under `base`.
pub fn trial_seed(base: u64, index: u64) -> u64 {
    mix64(base.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ mix64(index))
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `[0, bound)`; returns 0 for a zero bound.
pub fn below<R: RngCore + ?Sized>(rng: &mut R, bound: u64) -> u64 {
    if bound == 0 {
        return 0;
    }
    // Lemire's multiply-shift; bias is negligible for the small bounds used here.
    ((rng.next_u64() as u128 * bound as u128) >> 64) as u64
}
