//! Portable seeded random streams.
//!
//! Every run owns a [`ChaCha8Rng`] seeded from a stable 64-bit hash of
//! `(master_seed, label, index)`, so results are identical on every platform
//! and independent of how runs are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for run `index` of the stream named `label`.
pub fn derive_seed(master_seed: u64, label: &str, index: u64) -> u64 {
    let a = mix64(master_seed);
    let b = mix64(a ^ fnv1a(label.as_bytes()));
    mix64(b ^ mix64(index))
}

pub fn rng_for(master_seed: u64, label: &str, index: u64) -> RunRng {
    RunRng::seed_from_u64(derive_seed(master_seed, label, index))
}

pub fn rng_from_seed(seed: u64) -> RunRng {
    RunRng::seed_from_u64(seed)
}
