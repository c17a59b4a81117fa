//! Seed derivation and per-purpose RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; spreads nearby seeds over the whole space.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child of `seed` (calibration runs, experiment cells).
pub fn derive(seed: u64, index: u64) -> u64 {
    mix(mix(seed) ^ mix(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    PlayerRolls = 1,
    EnemyRolls = 2,
    Drops = 3,
    Scripts = 4,
    Estimates = 5,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, 0xD1CE_0000 + which as u64))
}
