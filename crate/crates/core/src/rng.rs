//! Seeded random substreams.
//!
//! Every random draw in the crate comes from a [`Substream`] keyed by
//! `(master seed, purpose, index)`. Streams for different indices are
//! independent ChaCha8 streams, so any sample or trial can be regenerated on
//! any thread without replaying the others.

use rand::{Rng, RngCore};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a substream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Channel,
    Transmit,
    Shuffle,
    PowerStart,
    Trial,
    Other(u32),
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Channel => 1,
            Purpose::Transmit => 2,
            Purpose::Shuffle => 3,
            Purpose::PowerStart => 4,
            Purpose::Trial => 5,
            Purpose::Other(x) => 0x1_0000_0000 | u64::from(x),
        }
    }
}

/// Provenance of a substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedTag {
    pub master_seed: u64,
    pub purpose: Purpose,
    pub index: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic random stream identified by a [`SeedTag`].
#[derive(Debug, Clone)]
pub struct Substream {
    tag: SeedTag,
    rng: ChaCha8Rng,
}

impl Substream {
    pub fn new(master_seed: u64, purpose: Purpose, index: u64) -> Self {
        let mut state = master_seed ^ purpose.code().wrapping_mul(0xD6E8_FEB8_6659_FD93);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        Self {
            tag: SeedTag {
                master_seed,
                purpose,
                index,
            },
            rng,
        }
    }

    pub fn tag(&self) -> SeedTag {
        self.tag
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(rand_distr::StandardNormal)
    }
}

impl RngCore for Substream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
