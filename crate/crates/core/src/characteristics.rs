// SPDX-License-Identifier: Apache-2.0

//! Per-sample data characteristics (token frequency, corpus repetitions,
//! prompt perplexity, Huffman code length, entropies) and binned
//! memorized / non-memorized score curves.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FrequencyTable, SampleRecord, TokenId};

/// Mean of `log10(count + 1)` over the tokens of `seq`.
pub fn avg_token_frequency(seq: &[TokenId], table: &FrequencyTable) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::invalid("average token frequency of an empty sequence"));
    }
    let sum: f64 = seq.iter().map(|&t| (table.count(t) as f64 + 1.0).log10()).sum();
    Ok(sum / seq.len() as f64)
}

// Polynomial rolling hash over Z / (2^61 - 1).
const MODULUS: u64 = (1 << 61) - 1;
const BASE: u64 = 0x1F3D_5B79_A1C3_E5F7 % MODULUS;

fn mul_mod(a: u64, b: u64) -> u64 {
    let wide = u128::from(a) * u128::from(b);
    let folded = (wide & u128::from(MODULUS)) + (wide >> 61);
    let r = folded as u64;
    if r >= MODULUS {
        r - MODULUS
    } else {
        r
    }
}

fn add_mod(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= MODULUS {
        s - MODULUS
    } else {
        s
    }
}

fn symbol(t: TokenId) -> u64 {
    u64::from(t) + 1
}

fn hash_of(seq: &[TokenId]) -> u64 {
    seq.iter().fold(0, |h, &t| add_mod(mul_mod(h, BASE), symbol(t)))
}

/// All needles of one length share a rolling window.
#[derive(Debug)]
struct LengthGroup {
    len: usize,
    /// `BASE^(len - 1)`, the weight of the oldest symbol in the window.
    lead_weight: u64,
    window: VecDeque<TokenId>,
    hash: u64,
    by_hash: HashMap<u64, Vec<usize>>,
}

impl LengthGroup {
    fn push(&mut self, t: TokenId, needles: &[Vec<TokenId>], counts: &mut [u64]) {
        if self.window.len() == self.len {
            let old = self.window.pop_front().expect("full window");
            let drop = mul_mod(symbol(old), self.lead_weight);
            self.hash = add_mod(self.hash, MODULUS - drop);
        }
        self.window.push_back(t);
        self.hash = add_mod(mul_mod(self.hash, BASE), symbol(t));
        if self.window.len() < self.len {
            return;
        }
        if let Some(candidates) = self.by_hash.get(&self.hash) {
            for &idx in candidates {
                // confirm against the window to rule out hash collisions
                if self.window.iter().eq(needles[idx].iter()) {
                    counts[idx] += 1;
                }
            }
        }
    }

    fn reset(&mut self) {
        self.window.clear();
        self.hash = 0;
    }
}

/// Single-pass counter of overlapping occurrences of many needles in a
/// token stream.
///
/// Feed tokens with [`push`](Self::push) and call [`end_document`](Self::end_document)
/// between documents that must not be matched across.
#[derive(Debug)]
pub struct RepetitionCounter {
    needles: Vec<Vec<TokenId>>,
    counts: Vec<u64>,
    groups: Vec<LengthGroup>,
}

impl RepetitionCounter {
    pub fn new(needles: Vec<Vec<TokenId>>) -> Result<Self> {
        if needles.iter().any(Vec::is_empty) {
            return Err(Error::invalid("repetition needle is empty"));
        }
        let mut groups: BTreeMap<usize, HashMap<u64, Vec<usize>>> = BTreeMap::new();
        for (i, needle) in needles.iter().enumerate() {
            groups
                .entry(needle.len())
                .or_default()
                .entry(hash_of(needle))
                .or_default()
                .push(i);
        }
        let groups = groups
            .into_iter()
            .map(|(len, by_hash)| LengthGroup {
                len,
                lead_weight: (1..len).fold(1, |w, _| mul_mod(w, BASE)),
                window: VecDeque::with_capacity(len),
                hash: 0,
                by_hash,
            })
            .collect();
        Ok(RepetitionCounter {
            counts: vec![0; needles.len()],
            needles,
            groups,
        })
    }

    pub fn push(&mut self, t: TokenId) {
        for g in &mut self.groups {
            g.push(t, &self.needles, &mut self.counts);
        }
    }

    pub fn extend<I: IntoIterator<Item = TokenId>>(&mut self, tokens: I) {
        for t in tokens {
            self.push(t);
        }
    }

    pub fn end_document(&mut self) {
        for g in &mut self.groups {
            g.reset();
        }
    }

    /// Occurrence counts in needle order.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn into_counts(self) -> Vec<u64> {
        self.counts
    }
}

/// Overlapping occurrences of `needle` in `corpus`.
pub fn count_repetitions<I>(needle: &[TokenId], corpus: I) -> Result<u64>
where
    I: IntoIterator<Item = TokenId>,
{
    let mut counter = RepetitionCounter::new(vec![needle.to_vec()])?;
    counter.extend(corpus);
    Ok(counter.counts()[0])
}

/// Same as [`count_repetitions`] over an in-memory corpus split into
/// `shards` chunks that overlap by `needle.len() - 1` tokens.
pub fn count_repetitions_sharded(needle: &[TokenId], corpus: &[TokenId], shards: usize) -> Result<u64> {
    if needle.is_empty() {
        return Err(Error::invalid("repetition needle is empty"));
    }
    if corpus.len() < needle.len() {
        return Ok(0);
    }
    let starts = corpus.len() - needle.len() + 1;
    let shards = shards.clamp(1, starts);
    let per = starts.div_ceil(shards);
    (0..shards)
        .into_par_iter()
        .map(|s| {
            let lo = s * per;
            let hi = ((s + 1) * per).min(starts);
            if lo >= hi {
                return Ok(0);
            }
            // windows starting in [lo, hi) end before hi + len - 1
            count_repetitions(needle, corpus[lo..hi + needle.len() - 1].iter().copied())
        })
        .sum()
}

/// `exp(-mean(logprobs))` for natural-log token probabilities.
pub fn perplexity(step_logprobs: &[f64]) -> Result<f64> {
    if step_logprobs.is_empty() {
        return Err(Error::invalid("perplexity of an empty log-probability list"));
    }
    if let Some(bad) = step_logprobs.iter().find(|v| !(**v <= 0.0)) {
        return Err(Error::invalid(format!("log-probability {bad} is not <= 0")));
    }
    let mean = step_logprobs.iter().sum::<f64>() / step_logprobs.len() as f64;
    Ok((-mean).exp())
}

fn symbol_counts(seq: &[TokenId]) -> BTreeMap<TokenId, u64> {
    let mut counts = BTreeMap::new();
    for &t in seq {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

/// Optimal prefix code built from a sequence's own symbol frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct HuffmanCode {
    pub code_lengths: BTreeMap<TokenId, u32>,
    pub total_bits: u64,
    pub bits_per_token: f64,
}

impl HuffmanCode {
    /// Sum of `2^-len` over the code; 1 for any complete code of two or
    /// more symbols.
    pub fn kraft_sum(&self) -> f64 {
        self.code_lengths.values().map(|&l| 0.5f64.powi(l as i32)).sum()
    }
}

pub fn huffman_code(seq: &[TokenId]) -> Result<HuffmanCode> {
    if seq.is_empty() {
        return Err(Error::invalid("Huffman code of an empty sequence"));
    }
    let counts = symbol_counts(seq);
    if counts.len() == 1 {
        let code_lengths = counts.keys().map(|&s| (s, 0)).collect();
        return Ok(HuffmanCode {
            code_lengths,
            total_bits: 0,
            bits_per_token: 0.0,
        });
    }

    // Arena of tree nodes; leaves first, in ascending symbol order.
    let mut parent: Vec<Option<usize>> = vec![None; counts.len()];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        counts.values().enumerate().map(|(i, &w)| Reverse((w, i))).collect();
    while heap.len() > 1 {
        let Reverse((wa, a)) = heap.pop().expect("two nodes");
        let Reverse((wb, b)) = heap.pop().expect("two nodes");
        let id = parent.len();
        parent.push(None);
        parent[a] = Some(id);
        parent[b] = Some(id);
        heap.push(Reverse((wa + wb, id)));
    }

    let mut code_lengths = BTreeMap::new();
    let mut total_bits = 0u64;
    for (leaf, (&sym, &w)) in counts.iter().enumerate() {
        let mut depth = 0u32;
        let mut node = leaf;
        while let Some(p) = parent[node] {
            depth += 1;
            node = p;
        }
        code_lengths.insert(sym, depth);
        total_bits += w * u64::from(depth);
    }
    Ok(HuffmanCode {
        code_lengths,
        total_bits,
        bits_per_token: total_bits as f64 / seq.len() as f64,
    })
}

/// `(total_bits, bits_per_token)` of the sequence under its own Huffman code.
pub fn huffman_bits(seq: &[TokenId]) -> Result<(u64, f64)> {
    let code = huffman_code(seq)?;
    Ok((code.total_bits, code.bits_per_token))
}

/// Fixed-width bits over Huffman bits: `ceil(log2 k) / bits_per_token` for
/// `k >= 2` distinct symbols, `None` for a single-symbol sequence.
pub fn huffman_compression_ratio(seq: &[TokenId]) -> Result<Option<f64>> {
    let code = huffman_code(seq)?;
    let distinct = code.code_lengths.len();
    if distinct < 2 {
        return Ok(None);
    }
    let fixed = (usize::BITS - (distinct - 1).leading_zeros()) as f64;
    Ok(Some(fixed / code.bits_per_token))
}

fn entropy_of_counts<I: IntoIterator<Item = u64>>(counts: I, total: f64) -> f64 {
    let h: f64 = counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    // a single symbol yields -0.0
    h.max(0.0)
}

/// Entropy in bits of the empirical symbol distribution of `seq`.
pub fn sequence_entropy(seq: &[TokenId]) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::invalid("entropy of an empty sequence"));
    }
    Ok(entropy_of_counts(symbol_counts(seq).into_values(), seq.len() as f64))
}

const DIST_SUM_TOLERANCE: f64 = 1e-6;

/// Entropy in bits of a predictive distribution, renormalized when its sum
/// is within `1e-6` of one.
pub fn step_entropy(dist: &[f64]) -> Result<f64> {
    if let Some(bad) = dist.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(Error::invalid(format!("probability {bad} is not a finite value >= 0")));
    }
    let sum: f64 = dist.iter().sum();
    if sum == 0.0 {
        return Err(Error::invalid("probability vector sums to zero"));
    }
    if (sum - 1.0).abs() > DIST_SUM_TOLERANCE {
        return Err(Error::invalid(format!("probability vector sums to {sum}, not 1")));
    }
    let h: f64 = dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / sum;
            -q * q.log2()
        })
        .sum();
    Ok(h.max(0.0))
}

/// Mean of per-step predictive entropies.
pub fn mean_uncertainty(step_entropies: &[f64]) -> Result<f64> {
    if step_entropies.is_empty() {
        return Err(Error::invalid("mean uncertainty of an empty entropy list"));
    }
    Ok(step_entropies.iter().sum::<f64>() / step_entropies.len() as f64)
}

/// Which part of a sample the sequence entropy column is computed over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyScope {
    Prefix,
    #[default]
    Continuation,
    Full,
}

/// Characteristics of one sample. Optional columns stay empty when their
/// input (corpus, prompt log-probabilities) was not supplied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicRecord {
    pub sample_id: String,
    pub avg_token_freq: f64,
    pub repetitions: Option<u64>,
    pub prompt_perplexity: Option<f64>,
    pub huffman_total_bits: u64,
    pub huffman_bits_per_token: f64,
    pub huffman_compression_ratio: Option<f64>,
    pub sequence_entropy_bits: f64,
    /// Entropy of the prefix; low values mean high redundancy.
    pub prefix_entropy_bits: f64,
}

/// Computes every characteristic of `sample`. Frequency and Huffman
/// columns use the full prefix + continuation sequence.
pub fn characterize(
    sample: &SampleRecord,
    table: &FrequencyTable,
    repetitions: Option<u64>,
    prompt_logprobs: Option<&[f64]>,
    scope: EntropyScope,
) -> Result<CharacteristicRecord> {
    let full = sample.full_sequence();
    let code = huffman_code(&full)?;
    let entropy_seq: &[TokenId] = match scope {
        EntropyScope::Prefix => &sample.prefix,
        EntropyScope::Continuation => &sample.continuation,
        EntropyScope::Full => &full,
    };
    Ok(CharacteristicRecord {
        sample_id: sample.sample_id.clone(),
        avg_token_freq: avg_token_frequency(&full, table)?,
        repetitions,
        prompt_perplexity: prompt_logprobs.map(perplexity).transpose()?,
        huffman_total_bits: code.total_bits,
        huffman_bits_per_token: code.bits_per_token,
        huffman_compression_ratio: huffman_compression_ratio(&full)?,
        sequence_entropy_bits: sequence_entropy(entropy_seq)?,
        prefix_entropy_bits: sequence_entropy(&sample.prefix)?,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Binning {
    #[default]
    EqualWidth,
    EqualCount,
}

pub const GROUP_ALL: &str = "all";
pub const GROUP_MEMORIZED: &str = "memorized";
pub const GROUP_NON_MEMORIZED: &str = "non_memorized";

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub score: f64,
    pub group: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinPoint {
    pub bin_center: f64,
    pub mean_score: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinnedCurve {
    pub characteristic: String,
    pub group: String,
    pub points: Vec<BinPoint>,
}

/// Bin edges shared by every group, covering `[min, max]` of all points.
fn bin_edges(xs: &mut [f64], n_bins: usize, binning: Binning) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let mut edges = Vec::with_capacity(n_bins + 1);
    edges.push(lo);
    for i in 1..n_bins {
        edges.push(match binning {
            Binning::EqualWidth => lo + (hi - lo) * i as f64 / n_bins as f64,
            Binning::EqualCount => xs[i * xs.len() / n_bins],
        });
    }
    edges.push(hi);
    edges
}

/// Per-group curves of mean score against binned `x`, plus a pooled `all`
/// curve. Empty bins are omitted.
pub fn bin_aggregate(
    characteristic: &str,
    points: &[CurvePoint],
    n_bins: usize,
    binning: Binning,
) -> Result<Vec<BinnedCurve>> {
    if n_bins == 0 {
        return Err(Error::invalid("bin count must be at least 1"));
    }
    if points.is_empty() {
        return Err(Error::invalid("no points to bin"));
    }
    if let Some(p) = points.iter().find(|p| !p.x.is_finite() || !p.score.is_finite()) {
        return Err(Error::invalid(format!("non-finite point ({}, {})", p.x, p.score)));
    }

    let mut xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let edges = bin_edges(&mut xs, n_bins, binning);
    // index of the last inner edge <= x; the maximum lands in the last bin
    let bin_of = |x: f64| edges[1..n_bins].partition_point(|&e| e <= x);

    let mut labels: Vec<&str> = points.iter().map(|p| p.group.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    labels.retain(|&l| l != GROUP_ALL);
    labels.insert(0, GROUP_ALL);

    let curves = labels
        .into_iter()
        .map(|label| {
            let mut sums = vec![(0.0f64, 0usize); n_bins];
            for p in points.iter().filter(|p| label == GROUP_ALL || p.group == label) {
                let b = bin_of(p.x);
                sums[b].0 += p.score;
                sums[b].1 += 1;
            }
            let points = sums
                .into_iter()
                .enumerate()
                .filter(|(_, (_, c))| *c > 0)
                .map(|(b, (s, c))| BinPoint {
                    bin_center: (edges[b] + edges[b + 1]) / 2.0,
                    mean_score: s / c as f64,
                    count: c,
                })
                .collect();
            BinnedCurve {
                characteristic: characteristic.to_string(),
                group: label.to_string(),
                points,
            }
        })
        .collect();
    Ok(curves)
}
