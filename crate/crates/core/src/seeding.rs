//! Seed derivation so every random draw in a run is a pure function of
//! (run seed, purpose, cycle).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose salts keep the RNG streams of different phases independent.
pub const SALT_INIT_POOL: u64 = 0x01;
pub const SALT_HEAD_INIT: u64 = 0x02;
pub const SALT_TRAIN: u64 = 0x03;
pub const SALT_SELECT: u64 = 0x04;
pub const SALT_KMEANS: u64 = 0x05;
pub const SALT_SUBSAMPLE: u64 = 0x06;
pub const SALT_SYNTHETIC: u64 = 0x07;

/// SplitMix64 finalizer; decorrelates nearby seeds.
fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mix a base seed with a purpose salt.
pub fn mix(seed: u64, salt: u64) -> u64 {
    splitmix(seed ^ splitmix(salt))
}

/// Mix a base seed with a purpose salt and a cycle index.
pub fn mix_cycle(seed: u64, salt: u64, cycle: usize) -> u64 {
    splitmix(mix(seed, salt) ^ splitmix(cycle as u64))
}

/// Seeded stream cipher RNG; stable across platforms and releases.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
