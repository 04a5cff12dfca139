//! Counter-based random streams.
//!
//! Every random draw is addressed by `(seed, purpose, index)`, so a dataset or a
//! parameter draw is reproducible no matter how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags separating independent streams derived from one user seed.
pub mod purpose {
    pub const INPUTS: u64 = 1;
    pub const SUPPORTS: u64 = 2;
    pub const PARAMS: u64 = 3;
    pub const MONTE_CARLO: u64 = 4;
    pub const HIDDEN_SUPPORT: u64 = 5;
    pub const TEST_INPUTS: u64 = 6;
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for item `index` of stream `purpose` under `seed`.
pub fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let key = mix(seed ^ mix(purpose.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
