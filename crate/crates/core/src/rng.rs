//! Splittable, value-like random streams.
//!
//! A [`RngStream`] is just a 64-bit key. Child streams are derived from a
//! parent key plus a `(label, index)` pair, so independent purposes
//! (covariates, responses, replication `k`, chain `j`) never share draws and
//! results do not depend on the order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    key: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: splitmix64(seed),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Derive an independent child stream.
    pub fn split(&self, label: &str, index: u64) -> Self {
        let k = splitmix64(self.key ^ fnv1a(label));
        Self {
            key: splitmix64(k ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93)),
        }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}
