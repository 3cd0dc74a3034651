//! Counter-based random streams.
//!
//! Every random draw in a simulation comes from a generator keyed by
//! `(seed, purpose, entity, round)`, so results do not depend on the order
//! in which agents are processed or on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Theta = 2,
    Omega = 3,
    AttackEstimate = 4,
    AttackTracker = 5,
    Probe = 6,
    Svrg = 7,
    Oracle = 8,
    Topology = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_seed(seed: u64, purpose: Purpose, entity: u64, round: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ purpose as u64);
    h = splitmix64(h ^ entity);
    splitmix64(h ^ round)
}

pub fn stream(seed: u64, purpose: Purpose, entity: u64, round: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, purpose, entity, round))
}
