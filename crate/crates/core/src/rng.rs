//! Seeded random streams.
//!
//! Every random step draws from a ChaCha8 generator keyed by the caller's seed
//! and a fixed stream id. Different protocol steps therefore never share
//! randomness, and adding a new step cannot perturb existing ones. ChaCha8
//! output is specified bit-for-bit, so results are portable across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type GlcRng = ChaCha8Rng;

/// Stream ids, one per independent use of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    MissingMask = 1,
    NoiseSelection = 2,
    NoiseValues = 3,
    Synthetic = 4,
    ModelInit = 5,
    Shuffle = 6,
    KMeans = 7,
}

/// Generator for `(seed, stream)`.
pub fn stream(seed: u64, which: Stream) -> GlcRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Mix a seed with a label into a new seed (FNV-1a over the bytes, then a
/// SplitMix64 finalizer). Stable across platforms and releases.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(label.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
