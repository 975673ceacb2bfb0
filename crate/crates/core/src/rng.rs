// SPDX-License-Identifier: Apache-2.0

//! The single source of randomness for the toolkit.
//!
//! Streams come from ChaCha20 (RFC 8439 block function, as implemented by
//! `rand_chacha`), keyed by expanding a 64-bit seed with `seed_from_u64`.
//! Integer range draws use `rand`'s value-stable uniform sampler, so a given
//! seed yields the same draws on every platform.

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug)]
pub struct SeededRng(ChaCha20Rng);

pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng(ChaCha20Rng::seed_from_u64(seed))
}

impl SeededRng {
    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }

    /// `k` distinct indices drawn uniformly from `0..n`, in draw order.
    /// Panics if `k > n`.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        index::sample(&mut self.0, n, k).into_vec()
    }

    pub fn unit(&mut self) -> f64 {
        self.0.gen::<f64>()
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

/// Per-record seed: first 8 bytes (little endian) of
/// `SHA-256(global_seed_le || part_0 || 0x00 || part_1 || 0x00 ...)`.
///
/// Independent of execution order, so sharded runs reproduce serial ones.
pub fn derive_seed(global_seed: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_le_bytes());
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

/// Seeded uniform subsample of `k` items (all items when `k >= len`),
/// returned in their original order.
pub fn subsample<T: Clone>(items: &[T], k: usize, seed: u64) -> Vec<T> {
    if k >= items.len() {
        return items.to_vec();
    }
    let mut picked = seeded_rng(seed).sample_indices(items.len(), k);
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i].clone()).collect()
}
