//! Seed derivation.
//!
//! Every random draw in the crate comes from one 64-bit root seed. Child
//! generators are ChaCha8 streams keyed by the root seed and selected by a
//! stream id hashed from a label plus an index, so two components never share
//! a stream and adding a new consumer does not shift existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Root of a deterministic generator tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Generator for `(label, index)`.
    pub fn stream(&self, label: &str, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(stream_id(label, index));
        rng
    }

    /// A derived subtree, for handing a component its own namespace.
    pub fn child(&self, label: &str, index: u64) -> SeedTree {
        SeedTree {
            root: splitmix64(self.root ^ stream_id(label, index)),
        }
    }
}

fn stream_id(label: &str, index: u64) -> u64 {
    // FNV-1a over the label, then mixed with the index.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(h ^ splitmix64(index))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
