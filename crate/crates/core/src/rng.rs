//! Seed derivation. Every replicate and node draws from its own ChaCha stream
//! whose seed is a pure function of the master seed and a path of tags, so
//! results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags used across the crate.
pub mod tag {
    pub const NODE: u64 = 0x6e6f_6465;
    pub const REFERENCE: u64 = 0x7265_6600;
    pub const DECISION: u64 = 0x6465_6369;
    pub const GRAPH: u64 = 0x6772_6170;
    pub const WEIGHTS: u64 = 0x7769_7368;
    pub const DATA: u64 = 0x6461_7461;
    pub const REPLICATE: u64 = 0x7265_706c;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `tags` into `master` one at a time.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(master: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, tags))
}
