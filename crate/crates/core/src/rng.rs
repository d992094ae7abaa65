//! Deterministic counter-based random streams.
//!
//! Every random draw in a run is keyed by `(seed, agent, iteration, kind)`
//! rather than pulled from one sequential generator. Whether agents execute
//! serially or in parallel, and whether a method skips a draw another method
//! makes (e.g. noise with sigma = 0), the values seen at any given key never
//! change. This is what makes run trajectories bitwise reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is consumed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    /// Minibatch index sampling.
    Batch,
    /// Gaussian noise added to the x-gradient estimator.
    NoiseX,
    /// Gaussian noise added to the y-gradient estimator.
    NoiseY,
    /// Run-level draws (e.g. the returned iterate index).
    Output,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::Batch => 0x42_41_54_43_48,
            StreamKind::NoiseX => 0x4e_4f_49_53_45,
            StreamKind::NoiseY => 0x4e_4f_49_53_59,
            StreamKind::Output => 0x4f_55_54_50_54,
        }
    }
}

/// The splitmix64 finalizer; a cheap full-avalanche mixer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn absorb(state: u64, word: u64) -> u64 {
    splitmix64(state ^ word)
}

/// Stream for per-agent draws at a given iteration.
pub fn agent_stream(seed: u64, agent: usize, iter: usize, kind: StreamKind) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    h = absorb(h, agent as u64);
    h = absorb(h, iter as u64);
    h = absorb(h, kind.tag());
    ChaCha8Rng::seed_from_u64(h)
}

/// Stream for run-level draws that are not tied to an agent or iteration.
pub fn run_stream(seed: u64, kind: StreamKind) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    h = absorb(h, kind.tag());
    ChaCha8Rng::seed_from_u64(h)
}
