//! Seed derivation.
//!
//! Every random stream in a run is a ChaCha8 generator keyed by a 64-bit
//! seed mixed from the global seed and a tuple of stream coordinates
//! (purpose tag, iteration, instance index, ...). Streams are therefore
//! independent of how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream purpose tags.
pub mod stream {
    pub const CORPUS: u64 = 0x01;
    pub const SEQUENCES: u64 = 0x02;
    pub const INIT: u64 = 0x03;
    pub const SHUFFLE: u64 = 0x04;
    pub const NEGATIVES: u64 = 0x05;
    pub const RESAMPLE: u64 = 0x06;
    pub const CLICK: u64 = 0x07;
    pub const EVAL: u64 = 0x08;
    pub const CANDIDATES: u64 = 0x09;
    pub const REWRITE: u64 = 0x0a;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a base seed with stream coordinates into a new seed.
pub fn derive(base: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(base), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn rng(base: u64, coords: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(base, coords))
}
