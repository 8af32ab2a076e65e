//! Seeded random streams.
//!
//! Every consumer of randomness asks for its own stream keyed by a
//! component id, so adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids. Kept in one place so they stay distinct.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const DATA: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const DEGRADE: u64 = 5;
    pub const PROBE: u64 = 6;
}

pub fn rng_for(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream for one step of an iterative process, e.g. the batch drawn at
/// outer iteration `step`. Independent of how many steps ran before.
pub fn rng_for_step(seed: u64, stream: u64, step: u64) -> Rng {
    let mut rng = rng_for(seed, stream);
    rng.set_word_pos(u128::from(step) << 20);
    rng
}
