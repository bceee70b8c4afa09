//! Seed derivation for independent, named random streams.

/// Named streams of one repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    GroundTruth = 1,
    TrainInputs = 2,
    TestInputs = 3,
    Proposal = 4,
    Gumbel = 5,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed of `base` labelled by `tag`.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    mix(mix(base) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn stream_seed(repetition_seed: u64, stream: Stream) -> u64 {
    derive_seed(repetition_seed, stream as u64)
}
