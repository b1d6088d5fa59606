//! Named, counter-derived random streams.
//!
//! Every random draw in the crate comes from a [`Stream`] obtained from the
//! run seed, a component label and a tuple of indices (replicate, indicator,
//! retry, ...). Streams are independent of evaluation order, which is what
//! makes parallel runs bit-identical to sequential ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Stream = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the stream for `(seed, label, indices)`.
pub fn stream(seed: u64, label: &str, indices: &[u64]) -> Stream {
    let mut h = splitmix64(seed);
    for b in label.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h = splitmix64(h ^ 0xff);
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x5851_f42d_4c95_7f2d)));
    }
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip(0u64..) {
        h = splitmix64(h.wrapping_add(word));
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform on [0, 1) with 53 bits of precision.
#[inline]
pub fn uniform(rng: &mut Stream) -> f64 {
    rng.random::<f64>()
}

#[inline]
pub fn bernoulli(rng: &mut Stream, p: f64) -> bool {
    uniform(rng) < p
}

#[inline]
pub fn standard_normal(rng: &mut Stream) -> f64 {
    rng.sample(StandardNormal)
}

/// A labelled family of streams sharing a seed and an index prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamFamily {
    seed: u64,
    label: &'static str,
    prefix: alloc::vec::Vec<u64>,
}

impl StreamFamily {
    pub fn new(seed: u64, label: &'static str) -> Self {
        Self { seed, label, prefix: alloc::vec::Vec::new() }
    }

    /// Sub-family with `index` appended to the prefix.
    pub fn child(&self, index: u64) -> Self {
        let mut prefix = self.prefix.clone();
        prefix.push(index);
        Self { seed: self.seed, label: self.label, prefix }
    }

    pub fn stream(&self, indices: &[u64]) -> Stream {
        let mut all = self.prefix.clone();
        all.extend_from_slice(indices);
        stream(self.seed, self.label, &all)
    }
}
