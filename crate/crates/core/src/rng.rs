//! Deterministic random streams.
//!
//! Every random object is drawn from its own ChaCha8 stream keyed by
//! `(master seed, stream tag, index)`, so results never depend on the order
//! in which worker threads pick up jobs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Distinct tags keep noise, initial data and paths independent.
pub mod tag {
    pub const NOISE: u64 = 0x6e6f_6973;
    pub const INITIAL: u64 = 0x696e_6974;
    pub const PATHS: u64 = 0x7061_7468;
    pub const FLOW: u64 = 0x666c_6f77;
    pub const SYNTHETIC: u64 = 0x7379_6e74;
    pub const LATTICE: u64 = 0x6c61_7474;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a tag and an index into a child seed.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ stream.rotate_left(17));
    splitmix64(b ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// RNG for job `index` of stream `stream` under `master`.
pub fn stream_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
