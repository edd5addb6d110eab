use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Seeded random stream: ChaCha20 keyed by `master_seed`, with `stream_index`
/// selecting one of the cipher's 2^64 independent streams.
///
/// Normal deviates come from `rand_distr::StandardNormal` (ziggurat). Two
/// streams built from the same `(master_seed, stream_index)` produce the same
/// sequence on a given platform and crate version.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Independent child stream. Children are a function of the parent's
    /// identity and `label` only, not of how much of the parent was consumed.
    pub fn fork(&self, label: u64) -> RngStream {
        let key = splitmix64(self.master_seed ^ splitmix64(self.stream_index.wrapping_add(0x5851_f42d)));
        RngStream::new(key, label)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Draws `k` distinct indices from `0..n` in increasing order.
    pub fn subset(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = rand::seq::index::sample(&mut self.rng, n, k.min(n)).into_vec();
        idx.sort_unstable();
        idx
    }
}

/// I.i.d. `N(mean, std²)` samples.
pub fn gaussian(rng: &mut RngStream, shape: &[usize], mean: f64, std: f64) -> Result<Tensor> {
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::param(format!("std must be positive, got {std}")));
    }
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| mean + std * rng.normal()).collect();
    Tensor::new(shape.to_vec(), data)
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// FNV-1a over the bytes of `parts`; stable across platforms and releases.
pub fn stable_hash(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.bytes().chain(std::iter::once(0x1f)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
