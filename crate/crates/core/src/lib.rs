// SPDX-License-Identifier: Apache-2.0

//! Verbatim-memorization analysis over generation logs.
//!
//! Scores model continuations against true continuations with an n-gram
//! exact-match metric, tracks how memorized sets change across an ordered
//! model family, relates memorization to data characteristics, and measures
//! how quantified prefix perturbations move the scores.

pub mod characteristics;
pub mod error;
pub mod io;
pub mod ngram;
pub mod overlap;
pub mod perturbation;
pub mod pipeline;
pub mod rng;
pub mod types;
pub mod validate;

pub use error::{Error, Result};
pub use types::{FamilyOrder, FrequencyTable, GenerationRecord, ModelMeta, SampleRecord, TokenId, TokenSeq};
