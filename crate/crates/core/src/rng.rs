//! Reproducible random streams.
//!
//! All randomness comes from ChaCha8 keyed by a 64-bit base seed. Independent
//! consumers (one per Monte-Carlo replication) use distinct 64-bit stream
//! numbers of the same key, so results never depend on how replications are
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
