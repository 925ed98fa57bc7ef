//! Seed derivation.
//!
//! Everything random in a suite descends from one master seed:
//!
//! ```text
//! pair_seed    = mix(master, PAIR, pair_index)
//! stream rng   = ChaCha8(mix(pair_seed, stream_tag, index))
//! ```
//!
//! where `mix` folds its arguments through the SplitMix64 finalizer. The
//! input drive uses stream `Input` with the channel as index, so channel
//! trains are independent of each other and of the weight draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Pair = 1,
    Delays = 2,
    WitnessWeights = 3,
    LearnerWeights = 4,
    Input = 5,
    Calibration = 6,
    Stratify = 7,
    Figure = 8,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ (stream as u64).wrapping_mul(0xA24B_AED4_963E_E407)) ^ index)
}

pub fn pair_seed(master: u64, pair: u64) -> u64 {
    mix(master, Stream::Pair, pair)
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream, 0))
}

pub fn channel_rng(seed: u64, stream: Stream, channel: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream, channel as u64 + 1))
}
