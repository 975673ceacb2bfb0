// SPDX-License-Identifier: Apache-2.0

//! N-gram memorization score, threshold classification, rates and
//! per-parameter memorization efficiency.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::TokenId;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Largest n accepted unless [`ScoreOptions::allow_long_ngrams`] is set.
pub const MAX_DEFAULT_N: usize = 32;

/// How shared n-grams are counted in the numerator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NgramSemantics {
    /// Distinct n-grams of the generation that occur in the truth, over the
    /// number of distinct truth n-grams.
    #[default]
    Set,
    /// Clipped window counts over the number of truth windows.
    Multiset,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScoreOptions {
    pub semantics: NgramSemantics,
    pub allow_long_ngrams: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorizationResult {
    pub sample_id: String,
    pub model_id: String,
    pub n: usize,
    pub score: f64,
    pub memorized: bool,
}

/// Distinct contiguous windows of length `n`. Empty when `seq.len() < n`.
pub fn ngram_set(seq: &[TokenId], n: usize) -> Result<HashSet<&[TokenId]>> {
    if n == 0 {
        return Err(Error::invalid("n-gram order must be at least 1"));
    }
    Ok(seq.windows(n).collect())
}

fn ngram_counts(seq: &[TokenId], n: usize) -> HashMap<&[TokenId], usize> {
    let mut counts = HashMap::new();
    for w in seq.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Set-semantics memorization score of `generated` against `truth`.
pub fn memorization_score(generated: &[TokenId], truth: &[TokenId], n: usize) -> Result<f64> {
    memorization_score_with(generated, truth, n, ScoreOptions::default())
}

pub fn memorization_score_with(generated: &[TokenId], truth: &[TokenId], n: usize, opts: ScoreOptions) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n-gram order must be at least 1"));
    }
    if n > MAX_DEFAULT_N && !opts.allow_long_ngrams {
        return Err(Error::invalid(format!(
            "n = {n} exceeds {MAX_DEFAULT_N}; enable long n-grams to allow it"
        )));
    }
    if truth.len() < n {
        return Err(Error::UndefinedDenominator {
            truth_len: truth.len(),
            n,
        });
    }

    match opts.semantics {
        NgramSemantics::Set => {
            let truth_grams: HashSet<&[TokenId]> = truth.windows(n).collect();
            let gen_grams: HashSet<&[TokenId]> = generated.windows(n).collect();
            let shared = gen_grams.iter().filter(|g| truth_grams.contains(*g)).count();
            Ok(shared as f64 / truth_grams.len() as f64)
        }
        NgramSemantics::Multiset => {
            let truth_counts = ngram_counts(truth, n);
            let gen_counts = ngram_counts(generated, n);
            let shared: usize = gen_counts
                .iter()
                .map(|(g, &c)| c.min(truth_counts.get(g).copied().unwrap_or(0)))
                .sum();
            Ok(shared as f64 / (truth.len() - n + 1) as f64)
        }
    }
}

/// `true` iff `score` strictly exceeds `threshold`.
pub fn classify_memorized(score: f64, threshold: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::invalid(format!("score {score} outside [0, 1]")));
    }
    Ok(score > threshold)
}

/// Fraction of memorized results for a single (model, n) group.
pub fn memorized_rate(results: &[MemorizationResult]) -> Result<f64> {
    let first = results
        .first()
        .ok_or_else(|| Error::invalid("memorized rate of an empty result list"))?;
    if let Some(other) = results.iter().find(|r| r.model_id != first.model_id || r.n != first.n) {
        return Err(Error::invalid(format!(
            "mixed groups: ({}, {}) and ({}, {})",
            first.model_id, first.n, other.model_id, other.n
        )));
    }
    let hits = results.iter().filter(|r| r.memorized).count();
    Ok(hits as f64 / results.len() as f64)
}

/// Weights plus biases of a fully connected stack with the given layer widths.
pub fn total_param_count(layer_widths: &[u64]) -> Result<u64> {
    if layer_widths.is_empty() {
        return Err(Error::invalid("layer width list is empty"));
    }
    if layer_widths.contains(&0) {
        return Err(Error::invalid("layer widths must be positive"));
    }
    let overflow = || Error::invalid("parameter count overflows u64");
    let weights = layer_widths
        .windows(2)
        .try_fold(0u64, |acc, w| w[0].checked_mul(w[1]).and_then(|p| acc.checked_add(p)));
    let biases = layer_widths.iter().try_fold(0u64, |acc, &w| acc.checked_add(w));
    weights
        .zip(biases)
        .and_then(|(w, b)| w.checked_add(b))
        .ok_or_else(overflow)
}

/// Memorized samples per parameter.
pub fn memorization_efficiency(memorized_count: u64, param_count: u64) -> Result<f64> {
    if param_count == 0 {
        return Err(Error::invalid("param_count must be positive"));
    }
    Ok(memorized_count as f64 / param_count as f64)
}
