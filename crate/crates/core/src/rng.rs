//! Coordinate-addressed random streams.
//!
//! Every random draw in the crate comes from a [`RngStream`]: a master seed
//! plus a tuple of coordinates `(split, epoch, batch, sample, transform)`.
//! The pair is hashed into a ChaCha8 seed, so the same coordinates always
//! reproduce the same draws no matter which thread or in which order they
//! are requested.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a sequence of words into one 64-bit key.
pub fn hash_words(seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(mix64(seed), |acc, &w| mix64(acc ^ mix64(w).rotate_left(17)))
}

/// Stable hash of a string, used to turn configuration labels into seeds.
pub fn hash_str(seed: u64, s: &str) -> u64 {
    let words: Vec<u64> = s
        .as_bytes()
        .chunks(8)
        .map(|c| {
            let mut buf = [0u8; 8];
            buf[..c.len()].copy_from_slice(c);
            u64::from_le_bytes(buf)
        })
        .chain(std::iter::once(s.len() as u64))
        .collect();
    hash_words(seed, &words)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamCoords {
    pub split: u64,
    pub epoch: u64,
    pub batch: u64,
    pub sample: u64,
    pub transform: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub coords: StreamCoords,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, coords: StreamCoords::default() }
    }

    pub fn at(seed: u64, coords: StreamCoords) -> Self {
        Self { seed, coords }
    }

    pub fn split(mut self, split: u64) -> Self {
        self.coords.split = split;
        self
    }

    pub fn epoch(mut self, epoch: u64) -> Self {
        self.coords.epoch = epoch;
        self
    }

    pub fn batch(mut self, batch: u64) -> Self {
        self.coords.batch = batch;
        self
    }

    pub fn sample(mut self, sample: u64) -> Self {
        self.coords.sample = sample;
        self
    }

    pub fn transform(mut self, transform: u64) -> Self {
        self.coords.transform = transform;
        self
    }

    pub fn key(&self) -> u64 {
        let c = &self.coords;
        hash_words(self.seed, &[c.split, c.epoch, c.batch, c.sample, c.transform])
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key())
    }
}
