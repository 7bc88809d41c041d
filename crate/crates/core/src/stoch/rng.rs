//! Seeded, splittable random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifies one reproducible stream: all streams sharing a master seed
/// use the same ChaCha key and differ only in the stream nonce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id }
    }

    /// Stream for trial `index` of a workload tagged `domain`. Domains keep
    /// different experiments sharing a seed from reusing randomness.
    pub fn for_trial(master_seed: u64, domain: u16, index: u64) -> Self {
        Self::new(master_seed, ((domain as u64) << 48) | (index & ((1 << 48) - 1)))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Domain tags used by the simulators.
pub mod domain {
    pub const COUPLED_MC: u16 = 1;
    pub const RCU_CODEBOOK: u16 = 2;
    pub const EPS_STAR_MC: u16 = 3;
    pub const FLF: u16 = 4;
    pub const VLF: u16 = 5;
    pub const VLF_COUPLED: u16 = 6;
    pub const STABILIZATION: u16 = 7;
    pub const PROBES: u16 = 8;
}
