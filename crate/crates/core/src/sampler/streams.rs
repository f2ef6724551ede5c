//! Counter-based random streams.
//!
//! Every random decision in a run is drawn from a ChaCha8 stream keyed by the
//! run seed and addressed by `(purpose, iteration, index)`. ChaCha is a
//! counter-mode generator, so a stream can be opened directly at its address
//! without advancing any shared state; results therefore do not depend on
//! thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Auxiliary = 2,
    Row = 3,
    Hyper = 4,
    Simulate = 5,
    Truth = 6,
}

/// Open the stream for `(purpose, iteration, index)` under `seed`.
pub fn stream(seed: u64, purpose: Purpose, iteration: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(purpose, iteration, index));
    rng
}

fn stream_id(purpose: Purpose, iteration: u64, index: u64) -> u64 {
    let mut h = mix64(purpose as u64 ^ 0x9E37_79B9_7F4A_7C15);
    h = mix64(h ^ iteration.wrapping_mul(0xD1B5_4A32_D192_ED03));
    mix64(h ^ index.wrapping_mul(0xA076_1D64_78BD_642F))
}

// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
