//! Seeded random-number streams.
//!
//! Every random consumer in the system draws from its own ChaCha stream
//! derived from one root seed. Streams that cannot influence actions
//! (goal exploration noise, high-level replay sampling) are therefore
//! isolated from streams that do, which is what makes an `alpha = 0`
//! run produce bitwise the same action sequence as a run with the
//! high-level agent disabled.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Env = 1,
    EvalEnv = 2,
    ActionNoise = 3,
    GoalNoise = 4,
    ReplayLow = 5,
    ReplayHigh = 6,
    InitLow = 7,
    InitHigh = 8,
    InitSimulator = 9,
    Logs = 10,
    Catalog = 11,
    SimulatorShuffle = 12,
    DnnPolicy = 13,
    InitDnn = 14,
}

pub fn stream_rng(root_seed: u64, stream: Stream) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(root_seed);
    rng.set_stream(stream as u64);
    rng
}
