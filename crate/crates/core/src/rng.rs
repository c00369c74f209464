//! Deterministic fan-out of one experiment seed into independent streams.
//!
//! Every stream is addressed by `(purpose, id, index)`, so adding a client
//! never perturbs the streams of the clients already present.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags for derived streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Shuffle = 3,
    Partition = 4,
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream, id: u64, index: u64) -> u64 {
    mix(mix(mix(seed ^ mix(stream as u64)) ^ id) ^ index)
}

pub fn stream_rng(seed: u64, stream: Stream, id: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream, id, index))
}
