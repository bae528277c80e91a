//! Seeded random streams. Every consumer gets its own ChaCha stream keyed by
//! purpose and index, so adding draws to one never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Bootstrap = 1,
    ScoreSampling = 2,
    Synth = 3,
    Policy = 4,
    Split = 5,
}

pub fn substream(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 48) ^ index);
    rng
}
