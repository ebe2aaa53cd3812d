//! Seeded random streams.
//!
//! A run owns one root seed. Each component draws from its own ChaCha stream
//! so that enabling or disabling one component never shifts another's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Leader = 1,
    Follower = 2,
    Composer = 3,
    Oracle = 4,
    Pretrain = 5,
    Verify = 6,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct RngStreams {
    pub leader: SimRng,
    pub follower: SimRng,
    pub composer: SimRng,
    pub oracle: SimRng,
    pub pretrain: SimRng,
    pub verify: SimRng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            leader: stream(seed, Stream::Leader),
            follower: stream(seed, Stream::Follower),
            composer: stream(seed, Stream::Composer),
            oracle: stream(seed, Stream::Oracle),
            pretrain: stream(seed, Stream::Pretrain),
            verify: stream(seed, Stream::Verify),
        }
    }
}
