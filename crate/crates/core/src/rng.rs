//! Seeded RNG substreams.
//!
//! Every source of randomness in a run is a ChaCha stream derived from the
//! master seed, an agent id, and a purpose tag. Streams never share state,
//! so agents can be evaluated in any order (or in parallel) without
//! changing the draws any of them sees.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// What a substream is used for. Each purpose gets its own stream per agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    /// Stochastic-gradient noise.
    Noise,
    /// Byzantine strategies that draw random vectors.
    Fault,
    /// Straggler delay draws.
    Delay,
    /// Family generation (agent id carries the cost index).
    Generator,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Noise => 0x4e4f495345, // "NOISE"
            StreamPurpose::Fault => 0x4641554c54, // "FAULT"
            StreamPurpose::Delay => 0x44454c4159, // "DELAY"
            StreamPurpose::Generator => 0x47454e, // "GEN"
        }
    }
}

/// Derives the substream for `(master_seed, replication, agent, purpose)`.
///
/// The 32-byte ChaCha key is filled with the four coordinates; distinct
/// coordinates yield distinct keys, which is all the separation we need.
pub fn substream(
    master_seed: u64,
    replication: u64,
    agent: u64,
    purpose: StreamPurpose,
) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&replication.to_le_bytes());
    key[16..24].copy_from_slice(&agent.to_le_bytes());
    key[24..32].copy_from_slice(&purpose.tag().to_le_bytes());
    ChaCha12Rng::from_seed(key)
}
