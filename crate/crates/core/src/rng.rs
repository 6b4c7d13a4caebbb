//! Seeded generators. Every random draw in the crate goes through here so a
//! `(seed, stream)` pair fully determines it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent generator for `stream` under `seed`.
pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids used by the training and evaluation code. Keeping them in one
/// place avoids two consumers silently sharing a stream.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const SECOND_INIT: u64 = 3;
    pub const SECOND_SHUFFLE: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const NOISE: u64 = 6;
    pub const GROUP_ORDER: u64 = 7;
    pub const SYNTH_MAP: u64 = 8;
    pub const SYNTH_SAMPLES: u64 = 9;
    /// Per-sample draws use `PER_SAMPLE_BASE + index`.
    pub const PER_SAMPLE_BASE: u64 = 1 << 32;
}
