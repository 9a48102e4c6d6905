//! Reproducible random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream whose seed is a
//! pure function of a root seed and a path of labels (cell, episode, step,
//! purpose). Execution order therefore never affects results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Labels distinguishing the independent consumers within one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Planning = 1,
    Transitions = 2,
    Acting = 3,
    Misc = 4,
}

/// A node in the stream tree. Deriving a child never mutates the parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        StreamKey(mix(seed ^ 0x5EED_0000_0000_0000))
    }

    pub fn child(self, label: u64) -> Self {
        StreamKey(mix(self.0 ^ mix(label.wrapping_add(0xA5A5_A5A5))))
    }

    pub fn episode(self, k: usize) -> Self {
        self.child(k as u64)
    }

    pub fn purpose(self, p: Purpose) -> Self {
        self.child(0xF000_0000_0000_0000 | p as u64)
    }

    pub fn rng(self) -> StreamRng {
        StreamRng::seed_from_u64(self.0)
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

/// FNV-1a hash used to turn textual cell descriptions into stream labels.
pub fn label_of(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}
