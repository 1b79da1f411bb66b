//! Hierarchical, order-independent random streams.
//!
//! Every consumer of randomness receives a [`Stream`] derived from a master
//! seed through a path of integer tags. Two streams with distinct paths are
//! seeded independently, so the draws of one replication never depend on how
//! many other replications ran before it or on which thread executed them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// A position in the stream tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stream(u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn string labels into stream tags.
pub fn label_tag(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Stream {
    pub fn from_seed(seed: u64) -> Self {
        Stream(splitmix64(seed))
    }

    /// Child stream identified by `tag`.
    pub fn child(self, tag: u64) -> Self {
        Stream(splitmix64(self.0 ^ splitmix64(tag.wrapping_add(0x632B_E59B_D9B4_E019))))
    }

    pub fn child_label(self, label: &str) -> Self {
        self.child(label_tag(label))
    }

    pub fn id(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> StreamRng {
        StreamRng::seed_from_u64(self.0)
    }
}
