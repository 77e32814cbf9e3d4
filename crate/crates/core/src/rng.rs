//! Seed derivation for independent, order-free random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a path of tags into a child seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(master: u64, tags: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}

/// Tags that keep the world's streams apart.
pub mod tags {
    pub const GENERATOR: u64 = 0x4745_4e45;
    pub const SPEAKER: u64 = 0x5350_4b52;
    pub const UTTERANCE: u64 = 0x5554_5452;
    pub const VOCODER: u64 = 0x564f_4344;
    pub const EXTRACTOR: u64 = 0x4558_5452;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const ANON: u64 = 0x414e_4f4e;
    pub const TRIALS: u64 = 0x5452_4941;
}
