//! Deterministic random-number substreams.
//!
//! Every proposal owns independent generators derived from
//! `(master seed, generation, proposal index)`, so a run is reproducible
//! regardless of how proposals are scheduled across threads. Each proposal
//! further splits into one stream per purpose, which keeps algorithms that
//! skip a step (ABC-IS never runs the low-fidelity model) aligned with those
//! that do.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type handed to priors, proposals and simulators.
pub type SimRng = ChaCha8Rng;

/// Purpose of a per-proposal substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Proposal = 0,
    Continuation = 1,
    LowFidelity = 2,
    HighFidelity = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Master seed of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RunSeed(pub u64);

impl RunSeed {
    /// Seed for replicate `r` of a multi-replicate experiment.
    pub fn replicate(self, r: u64) -> RunSeed {
        RunSeed(splitmix64(self.0 ^ splitmix64(r.wrapping_add(0x5151))))
    }

    pub fn proposal_rng(self, generation: usize, index: usize, stream: Stream) -> SimRng {
        let key = splitmix64(splitmix64(self.0) ^ splitmix64((generation as u64).wrapping_mul(0x1000_0000_01b3)))
            ^ splitmix64(index as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(stream as u64);
        rng
    }

    /// Generator for one-off draws outside the proposal loop.
    pub fn aux_rng(self, tag: u64) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.0 ^ splitmix64(!tag)));
        rng.set_stream(7);
        rng
    }
}
