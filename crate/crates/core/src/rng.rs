//! Seed expansion.
//!
//! Every random draw in a run comes from one 64-bit seed. Independent
//! streams are carved out of it with the ChaCha stream counter, so stream
//! `s` produces the same numbers no matter what other streams consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type JmlsRng = ChaCha8Rng;

/// Returns the generator for stream `stream` of `seed`.
pub fn stream(seed: u64, stream: u64) -> JmlsRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
