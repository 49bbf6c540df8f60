//! Seeded random sources. Every stochastic operation takes one of these explicitly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DetRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> DetRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for a named stage, so adding draws in one stage never shifts
/// the numbers seen by another.
pub fn stream(seed: u64, stage: u64) -> DetRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}
