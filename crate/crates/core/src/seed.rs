//! Splittable seed derivation.
//!
//! Every random event in a simulation draws from its own ChaCha8 stream whose
//! seed is derived from the master seed and a path of integer labels
//! (configuration id, round, event kind, node ids, ...). Each label is folded
//! in with one SplitMix64 finalization step, so `derive(m, &[a, b])` and
//! `derive(derive(m, &[a]), &[b])` are the same stream. Results never depend
//! on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |acc, &label| {
        splitmix64(splitmix64(acc) ^ splitmix64(label))
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Labels for the independent random events of a simulation.
pub mod tag {
    pub const CHANNEL: u64 = 1;
    pub const PROBE_NOISE: u64 = 2;
    pub const WHISPER_NOISE: u64 = 3;
    pub const CV_PARTITION: u64 = 4;
    pub const GROUP_KEY: u64 = 5;
    pub const ROUND: u64 = 6;
    pub const CONFIG: u64 = 7;
}
