//! Named random streams derived from one master seed.
//!
//! Every component draws from its own ChaCha stream so that, for example,
//! adding attack noise never shifts the policy's sampling sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Env = 1,
    PolicyInit = 2,
    Policy = 3,
    Attack = 4,
    Eval = 5,
    CriticInit = 6,
    Minibatch = 7,
    Tabular = 8,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Stream for a sub-task (episode, instance, ...) of a named stream.
pub fn substream(seed: u64, which: Stream, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(which as u64);
    rng
}
