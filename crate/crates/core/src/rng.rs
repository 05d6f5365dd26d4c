//! Seeded, stream-split random generators.
//!
//! All simulation uses ChaCha8, a counter-based generator. A run seeded with
//! `seed` hands work item `k` (a replicate or a block of subjects) its own
//! stream `k`, so results do not depend on how items are scheduled across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Generator for work item `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
