//! Seeded random number generation.
//!
//! Every random draw in this crate goes through ChaCha8 (`rand_chacha::ChaCha8Rng`),
//! a counter-based generator whose output stream is fixed by `(seed, stream)` and
//! identical across platforms. Seeds are plain `u64` values; independent
//! substreams (trials, sample sizes) are selected with [`rng_stream`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A generator on an independent ChaCha stream of the same seed.
pub fn rng_stream(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Per-trial seed: `seed XOR trial_index`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    seed ^ trial
}
