//! Labeled, reproducible random streams derived from one master seed.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed, with the
//! ChaCha stream id chosen by hashing the label (and an optional index).
//! Streams with different ids produce unrelated keystreams, so "shuffling",
//! "selection", "pairing" and "generation" never interfere with each other.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub const SHUFFLING: &str = "shuffling";
pub const SELECTION: &str = "selection";
pub const PAIRING: &str = "pairing";
pub const GENERATION: &str = "generation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RunSeed {
    pub master: u64,
}

impl RunSeed {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn stream(&self, label: &str) -> Stream {
        seeded_stream(self.master, label)
    }

    /// Child stream for item `index` of a labeled family (per-sample or per-epoch work).
    pub fn child(&self, label: &str, index: u64) -> Stream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(mix(fnv1a(label.as_bytes()), index));
        rng
    }
}

pub fn seeded_stream(master_seed: u64, label: &str) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(fnv1a(label.as_bytes()));
    rng
}

/// `k` distinct indices drawn uniformly from `0..n`, in draw order.
pub fn sample_without_replacement<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    index::sample(rng, n, k).into_vec()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

// splitmix64 finalizer over the combined words
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
