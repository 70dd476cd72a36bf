//! Seed derivation. Every random stream in the crate is keyed by a tuple of
//! integers so results do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of keys into one 64-bit seed.
pub fn derive(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0x2545_F491_4F6C_DD1D, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// A ChaCha stream keyed by `keys`.
pub fn rng(keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(keys))
}

// Stream tags keep unrelated consumers of the same seed apart.
pub const TAG_SCENE: u64 = 0x5CE7E;
pub const TAG_SIMULATOR: u64 = 0x51A;
pub const TAG_ROLLOUT: u64 = 0x2011;
pub const TAG_INIT: u64 = 0x1417;
pub const TAG_TRAIN_SCENE: u64 = 0x7241;
