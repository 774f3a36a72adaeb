//! Seeded randomness with counter-based stream splitting.
//!
//! Every random job draws from its own ChaCha stream derived from the run
//! seed and a job index, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for job `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
