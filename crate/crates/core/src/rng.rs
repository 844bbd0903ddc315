//! Reproducible random streams for parallel Monte Carlo.
//!
//! Every random draw in a simulation comes from a ChaCha stream selected by a
//! [`StreamKey`]. The master seed picks the ChaCha key; the (burst, node,
//! role) triple picks the 64-bit stream id, so two distinct keys never share
//! keystream regardless of how many values either consumes.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SimRng = ChaCha12Rng;

/// What a stream is used for. Distinct roles of the same (burst, node)
/// never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    Payload = 1,
    Params = 2,
    Noise = 3,
    Estimator = 4,
    Preamble = 5,
    Misc = 6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub burst: u64,
    pub node: u32,
    pub role: Role,
}

impl StreamKey {
    pub fn new(seed: u64, burst: u64, node: u32, role: Role) -> Self {
        Self {
            seed,
            burst,
            node,
            role,
        }
    }

    /// Stream id layout: burst in the high 36 bits, node in the next 20,
    /// role in the low 8.
    fn stream_id(&self) -> u64 {
        debug_assert!(self.burst < (1 << 36));
        debug_assert!(self.node < (1 << 20));
        (self.burst << 28) | ((self.node as u64) << 8) | self.role as u64
    }

    pub fn rng(&self) -> SimRng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id());
        rng
    }
}

/// Convenience for tests and single-shot tools.
pub fn seeded(seed: u64) -> SimRng {
    ChaCha12Rng::seed_from_u64(seed)
}
