//! Counter-based random substreams.
//!
//! Every consumer of randomness addresses its stream by `(seed, index, purpose)`.
//! The seed keys a ChaCha8 generator and the `(index, purpose)` pair selects the
//! 64-bit stream id, so a draw never depends on how many values other units or
//! other threads consumed first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. The discriminant is folded into the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Covariates = 1,
    Treatment = 2,
    EventControl = 3,
    EventTreated = 4,
    Censoring = 5,
    Split = 6,
    Bootstrap = 7,
    Features = 8,
    Folds = 9,
    Model = 10,
}

const PURPOSE_BITS: u32 = 8;

pub fn stream(seed: u64, index: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index << PURPOSE_BITS) | purpose as u64);
    rng
}

/// SplitMix64 finalizer, used to derive child seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix64(seed ^ mix64(label))
}

/// Order-independent fingerprint of a set of row ids.
pub fn set_fingerprint(ids: &[usize]) -> u64 {
    ids.iter()
        .fold(0u64, |acc, &i| acc.wrapping_add(mix64(i as u64)))
}
