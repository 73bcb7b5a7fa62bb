//! Seeded, splittable random streams.
//!
//! Every random draw in the toolkit comes from an [`RngStream`]. Streams are
//! derived from a root seed by keying on `(purpose, index)`, so the draws made
//! for one purpose never depend on how many draws another purpose consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    /// Independent child stream for `(purpose, index)`.
    pub fn child(&self, purpose: &str, index: u64) -> Self {
        let mut h = splitmix64(self.stream ^ 0x9e37_79b9_7f4a_7c15);
        h = splitmix64(h ^ fnv1a(purpose.as_bytes()));
        h = splitmix64(h ^ index);
        Self {
            seed: self.seed,
            stream: h,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
