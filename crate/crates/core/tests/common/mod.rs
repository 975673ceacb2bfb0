// SPDX-License-Identifier: Apache-2.0

//! Reference implementations and fixture builders shared by the
//! integration tests. The oracles are deliberately naive.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;

use memdyn_core::io;
use memdyn_core::{GenerationRecord, ModelMeta, SampleRecord, TokenSeq};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn test_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Window-enumeration score: distinct truth windows found anywhere in the
/// generation, over distinct truth windows. `None` when the truth has no
/// window of length `n`.
pub fn naive_score(generated: &[u32], truth: &[u32], n: usize) -> Option<f64> {
    if truth.len() < n {
        return None;
    }
    let mut distinct: Vec<Vec<u32>> = Vec::new();
    for i in 0..=truth.len() - n {
        let w = truth[i..i + n].to_vec();
        if !distinct.contains(&w) {
            distinct.push(w);
        }
    }
    let mut hits = 0usize;
    for w in &distinct {
        let mut found = false;
        let mut j = 0;
        while j + n <= generated.len() {
            if generated[j..j + n] == w[..] {
                found = true;
                break;
            }
            j += 1;
        }
        if found {
            hits += 1;
        }
    }
    Some(hits as f64 / distinct.len() as f64)
}

/// Pairs `(i, j)`, `i < j`, whose order the permutation flips.
pub fn naive_inversions(perm: &[usize]) -> u64 {
    let mut count = 0;
    for i in 0..perm.len() {
        for j in i + 1..perm.len() {
            if perm[i] > perm[j] {
                count += 1;
            }
        }
    }
    count
}

pub fn naive_position_shift(perm: &[usize]) -> f64 {
    let t = perm.len() as f64;
    let total: usize = perm.iter().enumerate().map(|(i, &p)| p.abs_diff(i)).sum();
    total as f64 / (t * t)
}

pub fn symbol_counts(seq: &[u32]) -> Vec<u64> {
    let mut sorted = seq.to_vec();
    sorted.sort_unstable();
    let mut counts = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        counts.push((j - i) as u64);
        i = j;
    }
    counts
}

pub fn naive_entropy(seq: &[u32]) -> f64 {
    let total = seq.len() as f64;
    symbol_counts(seq)
        .into_iter()
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

/// Minimum total length over every assignment of codeword lengths that
/// admits a binary prefix code (Kraft sum at most one).
pub fn exhaustive_min_code_bits(counts: &[u64]) -> u64 {
    let k = counts.len();
    if k <= 1 {
        return 0;
    }
    let max_len = k as u32;
    let mut best = u64::MAX;
    let mut lengths = vec![1u32; k];
    loop {
        let kraft: f64 = lengths.iter().map(|&l| 0.5f64.powi(l as i32)).sum();
        if kraft <= 1.0 + 1e-12 {
            let cost: u64 = counts.iter().zip(&lengths).map(|(&c, &l)| c * u64::from(l)).sum();
            best = best.min(cost);
        }
        let mut i = 0;
        while i < k && lengths[i] == max_len {
            lengths[i] = 1;
            i += 1;
        }
        if i == k {
            break;
        }
        lengths[i] += 1;
    }
    best
}

/// Occurrences of `needle` inside each document, documents scanned
/// separately.
pub fn naive_repetitions(needle: &[u32], docs: &[Vec<u32>]) -> u64 {
    let mut count = 0;
    for doc in docs {
        if doc.len() < needle.len() {
            continue;
        }
        for i in 0..=doc.len() - needle.len() {
            if doc[i..i + needle.len()] == *needle {
                count += 1;
            }
        }
    }
    count
}

pub fn random_seq(rng: &mut impl Rng, len: usize, vocab: u32) -> Vec<u32> {
    (0..len).map(|_| rng.gen_range(0..vocab)).collect()
}

pub fn random_perm(rng: &mut impl Rng, len: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..len).collect();
    p.shuffle(rng);
    p
}

pub fn random_subset(rng: &mut impl Rng, universe: &[String], p: f64) -> BTreeSet<String> {
    universe.iter().filter(|_| rng.gen_bool(p)).cloned().collect()
}

pub fn model(id: &str, params: u64, step: u64, rank: u32) -> ModelMeta {
    ModelMeta {
        model_id: id.to_string(),
        param_count: params,
        training_step: step,
        scale_rank: rank,
    }
}

/// Token ids at or above this value never occur in fixture samples.
pub const NOISE_BASE: u32 = 1_000_000;

/// `count` samples whose 32-token prefixes are permutations of distinct
/// tokens and whose continuations are random draws from a 500-token vocab.
pub fn fixture_samples(count: usize, seed: u64) -> Vec<SampleRecord> {
    let mut rng = test_rng(seed);
    let vocab: Vec<u32> = (1..=500).collect();
    (0..count)
        .map(|i| {
            let prefix: Vec<u32> = vocab.choose_multiple(&mut rng, 32).copied().collect();
            let continuation = random_seq(&mut rng, 32, 500)
                .into_iter()
                .map(|t| t + 1)
                .collect::<Vec<_>>();
            SampleRecord {
                sample_id: format!("s{i:04}"),
                prefix: TokenSeq(prefix),
                continuation: TokenSeq(continuation),
            }
        })
        .collect()
}

/// Tokens that share no n-gram with any fixture continuation.
pub fn noise_tokens(len: usize) -> Vec<u32> {
    (0..len as u32).map(|j| NOISE_BASE + j).collect()
}

/// Synthetic model: reproduces the continuation for memorized samples and
/// emits noise otherwise.
pub fn echo_generation(sample: &SampleRecord, model_id: &str, memorized: bool) -> GenerationRecord {
    let generated = if memorized {
        sample.continuation.0.clone()
    } else {
        noise_tokens(sample.continuation.len())
    };
    GenerationRecord {
        sample_id: sample.sample_id.clone(),
        model_id: model_id.to_string(),
        generated: TokenSeq(generated),
        step_logprobs: None,
        step_entropies: Some(vec![if memorized { 0.1 } else { 2.0 }; sample.continuation.len()]),
    }
}

/// Synthetic model prompted with a perturbed prefix: a memorized sample
/// keeps continuation token `j` only while prefix token `j` is intact.
pub fn prefix_sensitive_generation(
    original: &SampleRecord,
    perturbed_prefix: &[u32],
    model_id: &str,
    memorized: bool,
) -> GenerationRecord {
    let noise = noise_tokens(original.continuation.len());
    let generated = if memorized {
        original
            .continuation
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                if original.prefix.get(j).is_some() && original.prefix.get(j) == perturbed_prefix.get(j) {
                    t
                } else {
                    noise[j]
                }
            })
            .collect()
    } else {
        noise
    };
    let intact = original
        .prefix
        .iter()
        .zip(perturbed_prefix)
        .filter(|(a, b)| a == b)
        .count();
    let uncertainty = 2.0 - intact as f64 / original.prefix.len() as f64;
    GenerationRecord {
        sample_id: original.sample_id.clone(),
        model_id: model_id.to_string(),
        generated: TokenSeq(generated),
        step_logprobs: None,
        step_entropies: Some(vec![uncertainty; original.continuation.len()]),
    }
}

pub fn write_samples(path: &Path, samples: &[SampleRecord]) {
    io::write_jsonl(path, samples).expect("write samples");
}

pub fn write_generations(path: &Path, gens: &[GenerationRecord]) {
    io::write_jsonl(path, gens).expect("write generations");
}
