// SPDX-License-Identifier: Apache-2.0

//! Record validation. Violations are reported as data; nothing here fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::types::{GenerationRecord, ModelMeta, SampleRecord, DEFAULT_SEGMENT_LEN};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Zero-based position of the offending record in its input.
    pub index: usize,
    pub record_id: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {} (`{}`): {}", self.index, self.record_id, self.reason)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// Indices of records with at least one violation.
    pub fn bad_indices(&self) -> BTreeSet<usize> {
        self.violations.iter().map(|v| v.index).collect()
    }

    fn push(&mut self, index: usize, id: &str, reason: impl Into<String>) {
        self.violations.push(Violation {
            index,
            record_id: id.to_string(),
            reason: reason.into(),
        });
    }
}

/// Expected segment lengths when length checking is on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LengthProfile {
    pub prefix_len: usize,
    pub continuation_len: usize,
}

impl Default for LengthProfile {
    fn default() -> Self {
        LengthProfile {
            prefix_len: DEFAULT_SEGMENT_LEN,
            continuation_len: DEFAULT_SEGMENT_LEN,
        }
    }
}

pub fn validate_dataset(records: &[SampleRecord], strict_lengths: bool) -> ValidationReport {
    validate_dataset_with(records, strict_lengths.then(LengthProfile::default))
}

pub fn validate_dataset_with(records: &[SampleRecord], profile: Option<LengthProfile>) -> ValidationReport {
    let mut report = ValidationReport {
        checked: records.len(),
        ..Default::default()
    };

    let mut seen: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, rec) in records.iter().enumerate() {
        seen.entry(rec.sample_id.as_str()).or_default().push(i);
        if rec.sample_id.is_empty() {
            report.push(i, &rec.sample_id, "empty sample_id");
        }
        if let Some(p) = profile {
            if rec.prefix.len() != p.prefix_len {
                report.push(
                    i,
                    &rec.sample_id,
                    format!("prefix has {} tokens, expected {}", rec.prefix.len(), p.prefix_len),
                );
            }
            if rec.continuation.len() != p.continuation_len {
                report.push(
                    i,
                    &rec.sample_id,
                    format!(
                        "continuation has {} tokens, expected {}",
                        rec.continuation.len(),
                        p.continuation_len
                    ),
                );
            }
        }
    }

    for (id, positions) in seen.into_iter().filter(|(_, p)| p.len() > 1) {
        let listed = positions.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ");
        for &p in &positions[1..] {
            report.push(p, id, format!("duplicate sample_id, occurrences at records {listed}"));
        }
    }

    report.violations.sort_by_key(|v| v.index);
    report
}

/// Checks the per-step annotation invariants and (model, sample) uniqueness.
pub fn validate_generations(records: &[GenerationRecord]) -> ValidationReport {
    let mut report = ValidationReport {
        checked: records.len(),
        ..Default::default()
    };
    let mut seen: BTreeMap<(&str, &str), usize> = BTreeMap::new();

    for (i, rec) in records.iter().enumerate() {
        if rec.sample_id.is_empty() {
            report.push(i, &rec.sample_id, "empty sample_id");
        }
        if rec.model_id.is_empty() {
            report.push(i, &rec.sample_id, "empty model_id");
        }
        if let Some(first) = seen.insert((&rec.model_id, &rec.sample_id), i) {
            report.push(
                i,
                &rec.sample_id,
                format!(
                    "duplicate generation for model `{}`, first at record {first}",
                    rec.model_id
                ),
            );
        }
        if let Some(lp) = &rec.step_logprobs {
            if lp.len() != rec.generated.len() {
                report.push(
                    i,
                    &rec.sample_id,
                    format!(
                        "step_logprobs has {} values for {} generated tokens",
                        lp.len(),
                        rec.generated.len()
                    ),
                );
            }
            if let Some(bad) = lp.iter().find(|v| !(**v <= 0.0)) {
                report.push(i, &rec.sample_id, format!("step_logprob {bad} is not <= 0"));
            }
        }
        if let Some(ent) = &rec.step_entropies {
            if ent.len() != rec.generated.len() {
                report.push(
                    i,
                    &rec.sample_id,
                    format!(
                        "step_entropies has {} values for {} generated tokens",
                        ent.len(),
                        rec.generated.len()
                    ),
                );
            }
            if let Some(bad) = ent.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                report.push(
                    i,
                    &rec.sample_id,
                    format!("step_entropy {bad} is not a finite value >= 0"),
                );
            }
        }
    }
    report
}

/// Checks `param_count > 0`, unique ids, and that scale ranks form `0..K`.
pub fn validate_models(models: &[ModelMeta]) -> ValidationReport {
    let mut report = ValidationReport {
        checked: models.len(),
        ..Default::default()
    };
    let mut ids = BTreeSet::new();
    for (i, m) in models.iter().enumerate() {
        if m.param_count == 0 {
            report.push(i, &m.model_id, "param_count must be positive");
        }
        if !ids.insert(m.model_id.as_str()) {
            report.push(i, &m.model_id, "duplicate model_id");
        }
    }
    let ranks: BTreeSet<u32> = models.iter().map(|m| m.scale_rank).collect();
    if let Some(&max) = ranks.iter().next_back() {
        if max as usize + 1 != ranks.len() {
            let (i, m) = models
                .iter()
                .enumerate()
                .max_by_key(|(_, m)| m.scale_rank)
                .expect("non-empty");
            report.push(
                i,
                &m.model_id,
                format!(
                    "scale ranks are not contiguous from 0 (found {} distinct, max {max})",
                    ranks.len()
                ),
            );
        }
    }
    report
}
