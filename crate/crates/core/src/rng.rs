//! Seeded random streams.
//!
//! Every random decision in the crate is drawn from a ChaCha8 stream keyed by
//! `(seed, stream)`, so independent consumers never share state and results
//! are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids reserved for the major consumers of a run seed.
pub mod streams {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const PROBE: u64 = 4;
    /// Per-study image synthesis uses `STUDY_BASE + study_id`.
    pub const STUDY_BASE: u64 = 1 << 32;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
