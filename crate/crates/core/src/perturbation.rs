// SPDX-License-Identifier: Apache-2.0

//! Prefix perturbations: ratio-controlled random swaps with position-shift
//! and relative-ordering intensity, and frequency-pool token edits.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng, SeededRng};
use crate::types::{FrequencyTable, SampleRecord, TokenId, TokenSeq};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_POOL_SIZE: usize = 250;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyPool {
    High,
    Low,
}

impl fmt::Display for FrequencyPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrequencyPool::High => "high",
            FrequencyPool::Low => "low",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Shuffle,
    Delete,
    Insert,
    Replace,
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PerturbationKind::Shuffle => "shuffle",
            PerturbationKind::Delete => "delete",
            PerturbationKind::Insert => "insert",
            PerturbationKind::Replace => "replace",
        })
    }
}

/// One perturbation setting. Each variant carries exactly its own
/// parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PerturbationSpec {
    Shuffle {
        ratio: f64,
        seed: u64,
    },
    Delete {
        count: usize,
        pool: FrequencyPool,
        seed: u64,
    },
    Insert {
        count: usize,
        pool: FrequencyPool,
        seed: u64,
    },
    Replace {
        count: usize,
        pool: FrequencyPool,
        seed: u64,
    },
}

impl PerturbationSpec {
    pub fn kind(&self) -> PerturbationKind {
        match self {
            PerturbationSpec::Shuffle { .. } => PerturbationKind::Shuffle,
            PerturbationSpec::Delete { .. } => PerturbationKind::Delete,
            PerturbationSpec::Insert { .. } => PerturbationKind::Insert,
            PerturbationSpec::Replace { .. } => PerturbationKind::Replace,
        }
    }

    pub fn seed(&self) -> u64 {
        match *self {
            PerturbationSpec::Shuffle { seed, .. }
            | PerturbationSpec::Delete { seed, .. }
            | PerturbationSpec::Insert { seed, .. }
            | PerturbationSpec::Replace { seed, .. } => seed,
        }
    }

    /// Ratio for shuffles, operation count for edits.
    pub fn strength(&self) -> f64 {
        match *self {
            PerturbationSpec::Shuffle { ratio, .. } => ratio,
            PerturbationSpec::Delete { count, .. }
            | PerturbationSpec::Insert { count, .. }
            | PerturbationSpec::Replace { count, .. } => count as f64,
        }
    }

    pub fn pool(&self) -> Option<FrequencyPool> {
        match *self {
            PerturbationSpec::Shuffle { .. } => None,
            PerturbationSpec::Delete { pool, .. }
            | PerturbationSpec::Insert { pool, .. }
            | PerturbationSpec::Replace { pool, .. } => Some(pool),
        }
    }

    /// Stable identifier, e.g. `shuffle-r0.3-s7` or `delete-n4-high-s7`.
    pub fn variant_id(&self) -> String {
        match *self {
            PerturbationSpec::Shuffle { ratio, seed } => format!("shuffle-r{ratio}-s{seed}"),
            PerturbationSpec::Delete { count, pool, seed }
            | PerturbationSpec::Insert { count, pool, seed }
            | PerturbationSpec::Replace { count, pool, seed } => {
                format!("{}-n{count}-{pool}-s{seed}", self.kind())
            }
        }
    }
}

/// Position shift, relative ordering and their weighted combination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShuffleMetrics {
    pub position_shift: f64,
    pub relative_ordering: f64,
    pub combined: f64,
}

impl ShuffleMetrics {
    fn new(position_shift: f64, relative_ordering: f64, alpha: f64) -> Self {
        ShuffleMetrics {
            position_shift,
            relative_ordering,
            combined: alpha * position_shift + (1.0 - alpha) * relative_ordering,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShuffleOutcome {
    pub perturbed: TokenSeq,
    /// `permutation[i]` is the new index of the token originally at `i`.
    pub permutation: Vec<usize>,
    pub metrics: ShuffleMetrics,
}

fn check_permutation(perm: &[usize]) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        match seen.get_mut(p) {
            Some(slot) if !*slot => *slot = true,
            _ => return Err(Error::invalid(format!("{perm:?} is not a permutation"))),
        }
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// `sum |perm[i] - i| / T^2`.
pub fn position_shift(perm: &[usize]) -> Result<f64> {
    check_permutation(perm)?;
    if perm.is_empty() {
        return Ok(0.0);
    }
    let t = perm.len() as f64;
    let total: usize = perm.iter().enumerate().map(|(i, &p)| p.abs_diff(i)).sum();
    Ok(total as f64 / (t * t))
}

/// Number of index pairs `i < j` with `perm[i] > perm[j]`, by merge sort.
pub fn inversion_count(perm: &[usize]) -> u64 {
    fn sort_count(v: &mut [usize], buf: &mut Vec<usize>) -> u64 {
        let n = v.len();
        if n < 2 {
            return 0;
        }
        let mid = n / 2;
        let mut inv = sort_count(&mut v[..mid], buf) + sort_count(&mut v[mid..], buf);
        buf.clear();
        let (mut i, mut j) = (0, mid);
        while i < mid && j < n {
            if v[i] <= v[j] {
                buf.push(v[i]);
                i += 1;
            } else {
                // v[j] precedes every remaining left element
                inv += (mid - i) as u64;
                buf.push(v[j]);
                j += 1;
            }
        }
        buf.extend_from_slice(&v[i..mid]);
        buf.extend_from_slice(&v[j..]);
        v.copy_from_slice(buf);
        inv
    }
    let mut work = perm.to_vec();
    let mut buf = Vec::with_capacity(perm.len());
    sort_count(&mut work, &mut buf)
}

/// `2 * inversions / T^2`; zero for `T < 2`.
pub fn relative_ordering(perm: &[usize]) -> Result<f64> {
    check_permutation(perm)?;
    if perm.len() < 2 {
        return Ok(0.0);
    }
    let t = perm.len() as f64;
    Ok(2.0 * inversion_count(perm) as f64 / (t * t))
}

pub fn shuffle_metrics(perm: &[usize], alpha: f64) -> Result<ShuffleMetrics> {
    check_alpha(alpha)?;
    Ok(ShuffleMetrics::new(
        position_shift(perm)?,
        relative_ordering(perm)?,
        alpha,
    ))
}

/// Applies `round(ratio * T)` independent uniform transpositions.
pub fn shuffle_perturb(seq: &[TokenId], ratio: f64, seed: u64) -> Result<ShuffleOutcome> {
    shuffle_perturb_with(seq, ratio, &mut seeded_rng(seed), DEFAULT_ALPHA)
}

pub fn shuffle_perturb_with(seq: &[TokenId], ratio: f64, rng: &mut SeededRng, alpha: f64) -> Result<ShuffleOutcome> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::invalid(format!("shuffle ratio {ratio} outside [0, 1]")));
    }
    check_alpha(alpha)?;
    let t = seq.len();
    if ratio > 0.0 && t < 2 {
        return Err(Error::invalid(format!("cannot shuffle a sequence of {t} tokens")));
    }

    let swaps = (ratio * t as f64).round() as usize;
    // origin[p] = original index of the token now at position p
    let mut origin: Vec<usize> = (0..t).collect();
    for _ in 0..swaps {
        let a = rng.below(t);
        let mut b = rng.below(t - 1);
        if b >= a {
            b += 1;
        }
        origin.swap(a, b);
    }

    let mut permutation = vec![0; t];
    for (pos, &orig) in origin.iter().enumerate() {
        permutation[orig] = pos;
    }
    let perturbed = origin.iter().map(|&i| seq[i]).collect();
    let metrics = shuffle_metrics(&permutation, alpha)?;
    Ok(ShuffleOutcome {
        perturbed,
        permutation,
        metrics,
    })
}

/// Intensity of a rearrangement known only by its two sequences.
///
/// Position shift takes, for each perturbed token, the minimum displacement
/// to any original occurrence of the same token. Relative ordering matches
/// the k-th occurrence of each token in both sequences.
pub fn shuffle_metrics_from_sequences(
    original: &[TokenId],
    perturbed: &[TokenId],
    alpha: f64,
) -> Result<ShuffleMetrics> {
    check_alpha(alpha)?;
    if original.len() != perturbed.len() {
        return Err(Error::invalid("sequences differ in length"));
    }
    let mut occurrences: HashMap<TokenId, Vec<usize>> = HashMap::new();
    for (i, &tok) in original.iter().enumerate() {
        occurrences.entry(tok).or_default().push(i);
    }

    let mut used: HashMap<TokenId, usize> = HashMap::new();
    let mut matched = vec![0usize; perturbed.len()];
    let mut displacement = 0usize;
    for (i, &tok) in perturbed.iter().enumerate() {
        let positions = occurrences
            .get(&tok)
            .ok_or_else(|| Error::invalid(format!("token {tok} absent from the original")))?;
        let k = used.entry(tok).or_insert(0);
        let j = *positions
            .get(*k)
            .ok_or_else(|| Error::invalid(format!("token {tok} occurs more often after perturbation")))?;
        *k += 1;
        matched[j] = i;
        displacement += positions.iter().map(|&p| p.abs_diff(i)).min().unwrap_or(0);
    }

    let t = original.len() as f64;
    if original.is_empty() {
        return Ok(ShuffleMetrics::new(0.0, 0.0, alpha));
    }
    Ok(ShuffleMetrics::new(
        displacement as f64 / (t * t),
        relative_ordering(&matched)?,
        alpha,
    ))
}

/// High- and low-frequency token pools of a corpus frequency table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyPools {
    pub high: BTreeSet<TokenId>,
    pub low: BTreeSet<TokenId>,
    /// Set when the table held fewer than `2k` tokens.
    pub truncated: bool,
}

impl FrequencyPools {
    pub fn get(&self, pool: FrequencyPool) -> &BTreeSet<TokenId> {
        match pool {
            FrequencyPool::High => &self.high,
            FrequencyPool::Low => &self.low,
        }
    }
}

/// Head and tail `k` tokens of the table ordered by descending count, ties
/// broken by ascending id. Tables with fewer than `2k` entries are split
/// into two disjoint halves.
pub fn build_frequency_pools(table: &FrequencyTable, k: usize) -> Result<FrequencyPools> {
    if table.is_empty() {
        return Err(Error::invalid("frequency table is empty"));
    }
    if k == 0 {
        return Err(Error::invalid("pool size must be at least 1"));
    }
    let mut by_count: Vec<(TokenId, u64)> = table.iter().collect();
    let n = by_count.len();
    let truncated = n < 2 * k;
    let (high_k, low_k) = if truncated {
        log::warn!("frequency table has {n} tokens, fewer than 2 x {k}; pools truncated");
        (n - n / 2, n / 2)
    } else {
        (k, k)
    };

    by_count.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let high = by_count[..high_k].iter().map(|&(t, _)| t).collect();
    let low = by_count[n - low_k..].iter().map(|&(t, _)| t).collect();
    Ok(FrequencyPools { high, low, truncated })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EditOutcome {
    pub perturbed: TokenSeq,
    pub actual_ops: usize,
    /// Deleted or replaced indices of the input, or indices of inserted
    /// tokens in the output; ascending.
    pub positions: Vec<usize>,
}

/// Which positions a deletion may remove.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeleteTarget {
    /// Only positions holding a pool token.
    #[default]
    Pool,
    /// Any position, ignoring the pool.
    Any,
}

pub fn edit_delete(seq: &[TokenId], n: usize, pool: &BTreeSet<TokenId>, seed: u64) -> EditOutcome {
    edit_delete_with(seq, n, pool, DeleteTarget::Pool, &mut seeded_rng(seed))
}

/// Removes `min(n, eligible)` eligible positions chosen without replacement.
pub fn edit_delete_with(
    seq: &[TokenId],
    n: usize,
    pool: &BTreeSet<TokenId>,
    target: DeleteTarget,
    rng: &mut SeededRng,
) -> EditOutcome {
    let eligible: Vec<usize> = match target {
        DeleteTarget::Pool => (0..seq.len()).filter(|&i| pool.contains(&seq[i])).collect(),
        DeleteTarget::Any => (0..seq.len()).collect(),
    };
    let take = n.min(eligible.len());
    let mut positions: Vec<usize> = rng
        .sample_indices(eligible.len(), take)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    positions.sort_unstable();

    let mut drop = positions.iter().peekable();
    let perturbed = seq
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            if drop.peek() == Some(&i) {
                drop.next();
                false
            } else {
                true
            }
        })
        .map(|(_, &t)| t)
        .collect();
    EditOutcome {
        perturbed,
        actual_ops: take,
        positions,
    }
}

pub fn edit_insert(seq: &[TokenId], n: usize, pool: &BTreeSet<TokenId>, seed: u64) -> Result<EditOutcome> {
    edit_insert_with(seq, n, pool, &mut seeded_rng(seed))
}

/// Inserts `n` pool tokens one at a time, each at a uniform gap of the
/// current sequence.
pub fn edit_insert_with(
    seq: &[TokenId],
    n: usize,
    pool: &BTreeSet<TokenId>,
    rng: &mut SeededRng,
) -> Result<EditOutcome> {
    if n == 0 {
        return Ok(EditOutcome {
            perturbed: seq.into(),
            actual_ops: 0,
            positions: Vec::new(),
        });
    }
    if pool.is_empty() {
        return Err(Error::invalid("insertion pool is empty"));
    }
    let candidates: Vec<TokenId> = pool.iter().copied().collect();
    let mut out: Vec<(TokenId, bool)> = seq.iter().map(|&t| (t, false)).collect();
    for _ in 0..n {
        let tok = candidates[rng.below(candidates.len())];
        let gap = rng.below(out.len() + 1);
        out.insert(gap, (tok, true));
    }
    let positions = out
        .iter()
        .enumerate()
        .filter(|(_, (_, inserted))| *inserted)
        .map(|(i, _)| i)
        .collect();
    Ok(EditOutcome {
        perturbed: out.into_iter().map(|(t, _)| t).collect(),
        actual_ops: n,
        positions,
    })
}

pub fn edit_replace(seq: &[TokenId], n: usize, pool: &BTreeSet<TokenId>, seed: u64) -> Result<EditOutcome> {
    edit_replace_with(seq, n, pool, &mut seeded_rng(seed))
}

/// Replaces `n` distinct positions with pool tokens that differ from the
/// original whenever the pool offers an alternative. `actual_ops` counts
/// positions whose token changed.
pub fn edit_replace_with(
    seq: &[TokenId],
    n: usize,
    pool: &BTreeSet<TokenId>,
    rng: &mut SeededRng,
) -> Result<EditOutcome> {
    if n > seq.len() {
        return Err(Error::invalid(format!(
            "cannot replace {n} tokens in a sequence of {}",
            seq.len()
        )));
    }
    if n > 0 && pool.is_empty() {
        return Err(Error::invalid("replacement pool is empty"));
    }
    let mut positions = rng.sample_indices(seq.len(), n);
    positions.sort_unstable();
    let mut out = seq.to_vec();
    let mut changed = 0;
    for &p in &positions {
        let candidates: Vec<TokenId> = pool.iter().copied().filter(|&t| t != seq[p]).collect();
        if candidates.is_empty() {
            continue;
        }
        out[p] = candidates[rng.below(candidates.len())];
        changed += 1;
    }
    Ok(EditOutcome {
        perturbed: out.into(),
        actual_ops: changed,
        positions,
    })
}

/// `perturbed - original`, both scores in `[0, 1]`.
pub fn score_change(perturbed_score: f64, original_score: f64) -> Result<f64> {
    for s in [perturbed_score, original_score] {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::invalid(format!("score {s} outside [0, 1]")));
        }
    }
    Ok(perturbed_score - original_score)
}

/// Which sample segments a perturbation touches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbScope {
    #[default]
    Prefix,
    /// Prefix and continuation, each perturbed independently.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbOptions {
    pub alpha: f64,
    pub scope: PerturbScope,
    pub delete_target: DeleteTarget,
}

impl Default for PerturbOptions {
    fn default() -> Self {
        PerturbOptions {
            alpha: DEFAULT_ALPHA,
            scope: PerturbScope::Prefix,
            delete_target: DeleteTarget::Pool,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbedSample {
    pub record: SampleRecord,
    pub spec: PerturbationSpec,
    /// Intensity of the prefix shuffle; `None` for edits.
    pub metrics: Option<ShuffleMetrics>,
    pub actual_ops: usize,
}

fn perturb_segment(
    seq: &[TokenId],
    spec: &PerturbationSpec,
    pools: Option<&FrequencyPools>,
    opts: &PerturbOptions,
    rng: &mut SeededRng,
) -> Result<(TokenSeq, Option<ShuffleMetrics>, usize)> {
    let pool_of = |p: FrequencyPool| {
        pools
            .map(|pools| pools.get(p))
            .ok_or_else(|| Error::invalid("edit perturbations need frequency pools"))
    };
    Ok(match *spec {
        PerturbationSpec::Shuffle { ratio, .. } => {
            let out = shuffle_perturb_with(seq, ratio, rng, opts.alpha)?;
            let swaps = (ratio * seq.len() as f64).round() as usize;
            (out.perturbed, Some(out.metrics), swaps)
        }
        PerturbationSpec::Delete { count, pool, .. } => {
            let out = edit_delete_with(seq, count, pool_of(pool)?, opts.delete_target, rng);
            (out.perturbed, None, out.actual_ops)
        }
        PerturbationSpec::Insert { count, pool, .. } => {
            let out = edit_insert_with(seq, count, pool_of(pool)?, rng)?;
            (out.perturbed, None, out.actual_ops)
        }
        PerturbationSpec::Replace { count, pool, .. } => {
            let out = edit_replace_with(seq, count, pool_of(pool)?, rng)?;
            (out.perturbed, None, out.actual_ops)
        }
    })
}

/// Perturbs one sample with a stream seeded by `(spec.seed, sample_id)`,
/// so results do not depend on processing order.
pub fn perturb_sample(
    sample: &SampleRecord,
    spec: &PerturbationSpec,
    pools: Option<&FrequencyPools>,
    opts: &PerturbOptions,
) -> Result<PerturbedSample> {
    let mut rng = seeded_rng(derive_seed(spec.seed(), &[&sample.sample_id]));
    let (prefix, metrics, mut actual_ops) = perturb_segment(&sample.prefix, spec, pools, opts, &mut rng)?;
    let continuation = match opts.scope {
        PerturbScope::Prefix => sample.continuation.clone(),
        PerturbScope::Full => {
            let mut rng = seeded_rng(derive_seed(spec.seed(), &[&sample.sample_id, "continuation"]));
            let (cont, _, ops) = perturb_segment(&sample.continuation, spec, pools, opts, &mut rng)?;
            actual_ops += ops;
            cont
        }
    };
    Ok(PerturbedSample {
        record: SampleRecord {
            sample_id: sample.sample_id.clone(),
            prefix,
            continuation,
        },
        spec: *spec,
        metrics,
        actual_ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(T^2) count of index pairs whose relative order flips.
    fn pairwise_flips(perm: &[usize]) -> u64 {
        let mut flips = 0;
        for i in 0..perm.len() {
            for j in i + 1..perm.len() {
                if perm[i] > perm[j] {
                    flips += 1;
                }
            }
        }
        flips
    }

    #[test]
    fn identity_has_zero_intensity() {
        let out = shuffle_perturb(&[4, 5, 6, 7], 0.0, 9).unwrap();
        assert_eq!(out.perturbed.as_slice(), &[4, 5, 6, 7]);
        assert_eq!(out.permutation, vec![0, 1, 2, 3]);
        assert_eq!(
            (
                out.metrics.position_shift,
                out.metrics.relative_ordering,
                out.metrics.combined
            ),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn reversal_and_adjacent_swap_metrics() {
        let m = shuffle_metrics(&[3, 2, 1, 0], 0.5).unwrap();
        assert_eq!((m.position_shift, m.relative_ordering, m.combined), (0.5, 0.75, 0.625));
        let m = shuffle_metrics(&[1, 0, 2, 3], 0.5).unwrap();
        assert_eq!(
            (m.position_shift, m.relative_ordering, m.combined),
            (0.125, 0.125, 0.125)
        );
        assert_eq!(position_shift(&[1, 0]).unwrap(), 0.5);
        assert_eq!(relative_ordering(&[0]).unwrap(), 0.0);
        assert_eq!(relative_ordering(&[]).unwrap(), 0.0);
    }

    #[test]
    fn invalid_permutations_rejected() {
        assert!(position_shift(&[0, 0]).is_err());
        assert!(relative_ordering(&[0, 2]).is_err());
    }

    #[test]
    fn inversions_match_pair_enumeration() {
        let mut rng = seeded_rng(5);
        for t in 0..40 {
            let mut perm: Vec<usize> = (0..t).collect();
            for i in (1..t).rev() {
                let j = rng.below(i + 1);
                perm.swap(i, j);
            }
            assert_eq!(inversion_count(&perm), pairwise_flips(&perm));
        }
    }

    #[test]
    fn shuffle_errors() {
        assert!(shuffle_perturb(&[1, 2], 1.5, 0).is_err());
        assert!(shuffle_perturb(&[1], 0.5, 0).is_err());
        assert!(shuffle_perturb(&[1], 0.0, 0).is_ok());
    }

    #[test]
    fn shuffle_tracks_permutation() {
        let seq: Vec<u32> = (100..132).collect();
        let out = shuffle_perturb(&seq, 0.5, 11).unwrap();
        for (i, &p) in out.permutation.iter().enumerate() {
            assert_eq!(out.perturbed[p], seq[i]);
        }
        let again = shuffle_perturb(&seq, 0.5, 11).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn sequence_fallback_agrees_on_distinct_tokens() {
        let seq: Vec<u32> = (0..20).collect();
        let out = shuffle_perturb(&seq, 0.7, 3).unwrap();
        let from_seq = shuffle_metrics_from_sequences(&seq, &out.perturbed, 0.5).unwrap();
        assert_eq!(from_seq, out.metrics);
    }

    #[test]
    fn sequence_fallback_takes_minimum_displacement() {
        // swapping two equal tokens is invisible in the sequences
        let m = shuffle_metrics_from_sequences(&[7, 1, 7], &[7, 1, 7], 0.5).unwrap();
        assert_eq!(m.combined, 0.0);
        // [1, 2, 1] -> [1, 1, 2]: the 2 moved one slot, the second 1 is one slot from an original 1
        let m = shuffle_metrics_from_sequences(&[1, 2, 1], &[1, 1, 2], 0.5).unwrap();
        assert_eq!(m.position_shift, 2.0 / 9.0);
        assert_eq!(m.relative_ordering, 2.0 / 9.0);
        assert!(shuffle_metrics_from_sequences(&[1, 2], &[1, 3], 0.5).is_err());
    }

    #[test]
    fn pool_examples() {
        let table: FrequencyTable = (0..600u32).map(|t| (t, u64::from(t) * 3 + 1)).collect();
        let pools = build_frequency_pools(&table, 250).unwrap();
        assert_eq!((pools.high.len(), pools.low.len()), (250, 250));
        assert!(pools.high.is_disjoint(&pools.low));
        assert!(!pools.truncated);
        assert_eq!(pools.high.iter().next(), Some(&350));

        let table: FrequencyTable = [(10, 5), (11, 50), (12, 1), (13, 20)].into_iter().collect();
        let pools = build_frequency_pools(&table, 2).unwrap();
        assert_eq!(pools.high, BTreeSet::from([11, 13]));
        assert_eq!(pools.low, BTreeSet::from([10, 12]));

        let table: FrequencyTable = (0..6u32).map(|t| (t, 7)).collect();
        let pools = build_frequency_pools(&table, 2).unwrap();
        assert_eq!(pools.high, BTreeSet::from([0, 1]));
        assert_eq!(pools.low, BTreeSet::from([4, 5]));

        let pools = build_frequency_pools(&table, 5).unwrap();
        assert!(pools.truncated);
        assert_eq!(pools.high, BTreeSet::from([0, 1, 2]));
        assert_eq!(pools.low, BTreeSet::from([3, 4, 5]));

        assert!(build_frequency_pools(&FrequencyTable::new(), 2).is_err());
    }

    #[test]
    fn delete_examples() {
        let pool = BTreeSet::from([8]);
        let out = edit_delete(&[8, 1, 8, 2], 0, &pool, 1);
        assert_eq!((out.perturbed.as_slice(), out.actual_ops), (&[8, 1, 8, 2][..], 0));
        let out = edit_delete(&[8, 1, 8, 2], 2, &pool, 1);
        assert_eq!((out.perturbed.as_slice(), out.actual_ops), (&[1, 2][..], 2));
        assert_eq!(out.positions, vec![0, 2]);
        let out = edit_delete(&[8, 1, 3, 2], 3, &pool, 1);
        assert_eq!(out.actual_ops, 1);
        assert_eq!(out.perturbed.as_slice(), &[1, 3, 2]);

        let out = edit_delete_with(&[8, 1, 3, 2], 3, &pool, DeleteTarget::Any, &mut seeded_rng(4));
        assert_eq!((out.actual_ops, out.perturbed.len()), (3, 1));
    }

    #[test]
    fn insert_examples() {
        let pool = BTreeSet::from([90, 91]);
        let seq = [1, 2, 3, 4, 5];
        assert_eq!(edit_insert(&seq, 0, &pool, 2).unwrap().perturbed.as_slice(), &seq);
        let out = edit_insert(&seq, 3, &pool, 2).unwrap();
        assert_eq!(out.perturbed.len(), 8);
        assert_eq!(out.positions.len(), 3);
        for &p in &out.positions {
            assert!(pool.contains(&out.perturbed[p]));
        }
        let restored: Vec<u32> = out
            .perturbed
            .iter()
            .enumerate()
            .filter(|(i, _)| !out.positions.contains(i))
            .map(|(_, &t)| t)
            .collect();
        assert_eq!(restored, seq);
        assert!(edit_insert(&seq, 1, &BTreeSet::new(), 2).is_err());
    }

    #[test]
    fn replace_examples() {
        let seq = [1, 2, 3, 4];
        let pool = BTreeSet::from([50, 51]);
        assert_eq!(edit_replace(&seq, 0, &pool, 3).unwrap().perturbed.as_slice(), &seq);
        let out = edit_replace(&seq, 4, &pool, 3).unwrap();
        assert_eq!(out.actual_ops, 4);
        assert!(out.perturbed.iter().zip(seq.iter()).all(|(a, b)| a != b));
        assert!(edit_replace(&seq, 5, &pool, 3).is_err());
        assert!(edit_replace(&seq, 1, &BTreeSet::new(), 3).is_err());

        // the only pool token equals the original, so nothing can change
        let out = edit_replace(&[7, 7], 2, &BTreeSet::from([7]), 3).unwrap();
        assert_eq!((out.actual_ops, out.perturbed.as_slice()), (0, &[7, 7][..]));
        // a pool of two always yields a different token
        for seed in 0..50 {
            let out = edit_replace(&[50, 51], 2, &pool, seed).unwrap();
            assert_eq!(out.perturbed.as_slice(), &[51, 50]);
        }
    }

    #[test]
    fn score_change_examples() {
        assert!((score_change(0.3, 0.8).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(score_change(0.4, 0.4).unwrap(), 0.0);
        assert_eq!(score_change(1.0, 0.0).unwrap(), 1.0);
        assert!(score_change(1.1, 0.0).is_err());
    }

    #[test]
    fn spec_parameters_are_exclusive() {
        let spec: PerturbationSpec = serde_json::from_str(r#"{"kind":"shuffle","ratio":0.3,"seed":1}"#).unwrap();
        assert_eq!(spec.variant_id(), "shuffle-r0.3-s1");
        assert!(
            serde_json::from_str::<PerturbationSpec>(r#"{"kind":"shuffle","ratio":0.3,"seed":1,"pool":"high"}"#)
                .is_err()
        );
        let spec: PerturbationSpec =
            serde_json::from_str(r#"{"kind":"delete","count":4,"pool":"low","seed":2}"#).unwrap();
        assert_eq!(spec.variant_id(), "delete-n4-low-s2");
        assert!(serde_json::from_str::<PerturbationSpec>(r#"{"kind":"delete","ratio":0.3,"seed":1}"#).is_err());
    }

    #[test]
    fn full_scope_touches_continuation() {
        let sample = SampleRecord {
            sample_id: "a".into(),
            prefix: (0..32).collect(),
            continuation: (32..64).collect(),
        };
        let spec = PerturbationSpec::Shuffle { ratio: 0.5, seed: 4 };
        let prefix_only = perturb_sample(&sample, &spec, None, &PerturbOptions::default()).unwrap();
        assert_eq!(prefix_only.record.continuation, sample.continuation);
        assert_ne!(prefix_only.record.prefix, sample.prefix);
        let opts = PerturbOptions {
            scope: PerturbScope::Full,
            ..Default::default()
        };
        let full = perturb_sample(&sample, &spec, None, &opts).unwrap();
        assert_eq!(full.record.prefix, prefix_only.record.prefix);
        assert_ne!(full.record.continuation, sample.continuation);

        let edit = PerturbationSpec::Delete {
            count: 2,
            pool: FrequencyPool::High,
            seed: 1,
        };
        assert!(perturb_sample(&sample, &edit, None, &PerturbOptions::default()).is_err());
    }
}
