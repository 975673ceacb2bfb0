// SPDX-License-Identifier: Apache-2.0

//! Domain records shared by every analysis stage.
//!
//! Token ids are opaque `u32` values; nothing in this crate tokenizes text.
//! Records serialize to one JSON object per line with the field names used
//! here verbatim.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

pub type TokenId = u32;

/// Default prefix and continuation length of a sample.
pub const DEFAULT_SEGMENT_LEN: usize = 32;

/// An ordered sequence of token ids. Equality is element-wise.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(pub Vec<TokenId>);

impl TokenSeq {
    pub fn new(tokens: Vec<TokenId>) -> Self {
        TokenSeq(tokens)
    }

    pub fn as_slice(&self) -> &[TokenId] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<TokenId> {
        self.0
    }
}

impl Deref for TokenSeq {
    type Target = [TokenId];

    fn deref(&self) -> &[TokenId] {
        &self.0
    }
}

impl From<Vec<TokenId>> for TokenSeq {
    fn from(v: Vec<TokenId>) -> Self {
        TokenSeq(v)
    }
}

impl From<&[TokenId]> for TokenSeq {
    fn from(v: &[TokenId]) -> Self {
        TokenSeq(v.to_vec())
    }
}

impl FromIterator<TokenId> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = TokenId>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().collect())
    }
}

/// One test sequence: a prefix prompt and its true continuation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub sample_id: String,
    pub prefix: TokenSeq,
    pub continuation: TokenSeq,
}

impl SampleRecord {
    /// Prefix followed by continuation.
    pub fn full_sequence(&self) -> TokenSeq {
        self.prefix.iter().chain(self.continuation.iter()).copied().collect()
    }
}

/// A model's continuation for one sample.
///
/// `step_logprobs` are natural-log probabilities of the chosen tokens and
/// `step_entropies` are predictive entropies in bits, one per generated token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRecord {
    pub sample_id: String,
    pub model_id: String,
    pub generated: TokenSeq,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_entropies: Option<Vec<f64>>,
}

/// Metadata for one model (or one checkpoint of a model) in a family.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model_id: String,
    pub param_count: u64,
    pub training_step: u64,
    pub scale_rank: u32,
}

/// Which metadata column orders a model family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyOrder {
    #[default]
    Scale,
    Step,
}

impl FamilyOrder {
    pub fn key(self, meta: &ModelMeta) -> u64 {
        match self {
            FamilyOrder::Scale => u64::from(meta.scale_rank),
            FamilyOrder::Step => meta.training_step,
        }
    }
}

impl fmt::Display for FamilyOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyOrder::Scale => "scale",
            FamilyOrder::Step => "step",
        })
    }
}

/// Corpus occurrence count per token id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    entries: BTreeMap<TokenId, u64>,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: TokenId, count: u64) -> Option<u64> {
        self.entries.insert(token, count)
    }

    /// Count for `token`; unseen tokens count as zero.
    pub fn count(&self, token: TokenId) -> u64 {
        self.entries.get(&token).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, u64)> + '_ {
        self.entries.iter().map(|(&t, &c)| (t, c))
    }

    /// Tallies token occurrences over a set of sequences.
    pub fn from_sequences<'a, I>(seqs: I) -> Self
    where
        I: IntoIterator<Item = &'a [TokenId]>,
    {
        let mut table = Self::new();
        for seq in seqs {
            for &t in seq {
                *table.entries.entry(t).or_insert(0) += 1;
            }
        }
        table
    }
}

impl FromIterator<(TokenId, u64)> for FrequencyTable {
    fn from_iter<I: IntoIterator<Item = (TokenId, u64)>>(iter: I) -> Self {
        FrequencyTable {
            entries: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_round_trips_through_json() {
        let rec = SampleRecord {
            sample_id: "s1".into(),
            prefix: vec![1, 2, 3].into(),
            continuation: vec![4, 5].into(),
        };
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(line, r#"{"sample_id":"s1","prefix":[1,2,3],"continuation":[4,5]}"#);
        let back: SampleRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn negative_token_ids_are_rejected() {
        let err = serde_json::from_str::<SampleRecord>(r#"{"sample_id":"s","prefix":[-1],"continuation":[]}"#);
        assert!(err.is_err());
    }

    #[test]
    fn optional_generation_fields_are_omitted() {
        let rec = GenerationRecord {
            sample_id: "s".into(),
            model_id: "m".into(),
            generated: vec![7].into(),
            step_logprobs: None,
            step_entropies: Some(vec![0.5]),
        };
        let line = serde_json::to_string(&rec).unwrap();
        assert!(!line.contains("step_logprobs"));
        let back: GenerationRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn unseen_tokens_have_zero_count() {
        let table: FrequencyTable = [(5, 1000), (7, 10)].into_iter().collect();
        assert_eq!(table.count(5), 1000);
        assert_eq!(table.count(6), 0);
    }
}
