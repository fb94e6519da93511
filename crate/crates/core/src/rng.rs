//! Per-subsystem random streams derived from one simulation seed.
//!
//! Every subsystem draws from its own ChaCha stream keyed by a fixed label,
//! so adding draws in one subsystem never shifts another's sequence. ChaCha
//! output is specified bit-for-bit, which keeps replays identical across
//! platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Ignition = 1,
    Fire = 2,
    Population = 3,
    Decisions = 4,
    Movement = 5,
    Collaboration = 6,
}

pub fn stream(seed: u64, label: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct SimRngs {
    pub ignition: ChaCha8Rng,
    pub fire: ChaCha8Rng,
    pub population: ChaCha8Rng,
    pub decisions: ChaCha8Rng,
    pub movement: ChaCha8Rng,
    pub collaboration: ChaCha8Rng,
}

impl SimRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            ignition: stream(seed, Stream::Ignition),
            fire: stream(seed, Stream::Fire),
            population: stream(seed, Stream::Population),
            decisions: stream(seed, Stream::Decisions),
            movement: stream(seed, Stream::Movement),
            collaboration: stream(seed, Stream::Collaboration),
        }
    }
}
