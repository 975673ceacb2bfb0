// SPDX-License-Identifier: Apache-2.0

//! Cross-model memorization dynamics over an ordered model family.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FamilyOrder, ModelMeta};

/// Per-model memorized sample sets at a fixed n and threshold, ordered by
/// scale rank (or training step in checkpoint mode).
#[derive(Clone, Debug)]
pub struct MemorizationSetFamily {
    models: Vec<ModelMeta>,
    sets: Vec<BTreeSet<String>>,
    universe: BTreeSet<String>,
    order: FamilyOrder,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairOverlap {
    pub both_memorized: usize,
    pub both_unmemorized: usize,
    pub small_only: usize,
    pub large_only: usize,
}

impl PairOverlap {
    pub fn total(&self) -> usize {
        self.both_memorized + self.both_unmemorized + self.small_only + self.large_only
    }
}

/// Denominator of the newly memorized / forgotten rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateBase {
    /// All test samples.
    #[default]
    Universe,
    /// Samples memorized by the current model.
    CurrentMemorized,
}

impl MemorizationSetFamily {
    /// Sorts members by `order` and checks that keys are strictly increasing
    /// and every set lies inside `universe`.
    pub fn new(
        members: Vec<(ModelMeta, BTreeSet<String>)>,
        universe: BTreeSet<String>,
        order: FamilyOrder,
    ) -> Result<Self> {
        let mut members = members;
        members.sort_by_key(|(m, _)| order.key(m));
        for pair in members.windows(2) {
            if order.key(&pair[0].0) == order.key(&pair[1].0) {
                return Err(Error::invalid(format!(
                    "models `{}` and `{}` share {order} key {}",
                    pair[0].0.model_id,
                    pair[1].0.model_id,
                    order.key(&pair[0].0)
                )));
            }
        }
        for (m, set) in &members {
            if let Some(stray) = set.iter().find(|s| !universe.contains(*s)) {
                return Err(Error::invalid(format!(
                    "model `{}` memorizes `{stray}` outside the universe",
                    m.model_id
                )));
            }
        }
        let (models, sets) = members.into_iter().unzip();
        Ok(MemorizationSetFamily {
            models,
            sets,
            universe,
            order,
        })
    }

    pub fn models(&self) -> &[ModelMeta] {
        &self.models
    }

    pub fn universe(&self) -> &BTreeSet<String> {
        &self.universe
    }

    pub fn order(&self) -> FamilyOrder {
        self.order
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn memorized(&self, k: usize) -> Result<&BTreeSet<String>> {
        self.sets.get(k).ok_or(Error::IndexOutOfRange {
            index: k,
            len: self.models.len(),
        })
    }

    pub fn index_of(&self, model_id: &str) -> Result<usize> {
        self.models
            .iter()
            .position(|m| m.model_id == model_id)
            .ok_or_else(|| Error::UnknownModel(model_id.to_string()))
    }

    /// Four-way partition of the universe for a (smaller, larger) model pair.
    pub fn pair_overlap(&self, small: &str, large: &str) -> Result<PairOverlap> {
        let (i, j) = (self.index_of(small)?, self.index_of(large)?);
        if i >= j {
            return Err(Error::invalid(format!(
                "`{small}` must precede `{large}` in {} order",
                self.order
            )));
        }
        Ok(self.pair_overlap_at(i, j))
    }

    pub(crate) fn pair_overlap_at(&self, i: usize, j: usize) -> PairOverlap {
        let (a, b) = (&self.sets[i], &self.sets[j]);
        let both_memorized = a.intersection(b).count();
        let small_only = a.len() - both_memorized;
        let large_only = b.len() - both_memorized;
        PairOverlap {
            both_memorized,
            small_only,
            large_only,
            both_unmemorized: self.universe.len() - both_memorized - small_only - large_only,
        }
    }

    fn union_before(&self, k: usize) -> BTreeSet<&String> {
        self.sets[..k].iter().flatten().collect()
    }

    /// Samples memorized by model `k` and by no earlier model.
    pub fn newly_memorized(&self, k: usize) -> Result<BTreeSet<String>> {
        let current = self.memorized(k)?;
        let before = self.union_before(k);
        Ok(current.iter().filter(|s| !before.contains(s)).cloned().collect())
    }

    /// Samples memorized by some earlier model but not by model `k`.
    pub fn newly_forgotten(&self, k: usize) -> Result<BTreeSet<String>> {
        let current = self.memorized(k)?;
        Ok(self
            .union_before(k)
            .into_iter()
            .filter(|s| !current.contains(*s))
            .cloned()
            .collect())
    }

    /// `(newly_memorized_rate, newly_forgotten_rate)` for model `k`.
    pub fn newly_rates(&self, k: usize, base: RateBase) -> Result<(f64, f64)> {
        if self.universe.is_empty() {
            return Err(Error::invalid("empty universe"));
        }
        let new = self.newly_memorized(k)?.len() as f64;
        let gone = self.newly_forgotten(k)?.len() as f64;
        let denom = match base {
            RateBase::Universe => self.universe.len(),
            RateBase::CurrentMemorized => self.sets[k].len(),
        };
        if denom == 0 {
            return Ok((0.0, 0.0));
        }
        Ok((new / denom as f64, gone / denom as f64))
    }

    /// Index of the first model that memorizes `sample_id`.
    pub fn first_memorized_scale(&self, sample_id: &str) -> Result<Option<usize>> {
        if !self.universe.contains(sample_id) {
            return Err(Error::UnknownSample(sample_id.to_string()));
        }
        Ok(self.sets.iter().position(|s| s.contains(sample_id)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(id: &str, rank: u32) -> ModelMeta {
        ModelMeta {
            model_id: id.into(),
            param_count: 1 + u64::from(rank),
            training_step: 1000 * (3 - u64::from(rank)),
            scale_rank: rank,
        }
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn family(mems: &[&[&str]], universe: &[&str]) -> MemorizationSetFamily {
        let members = mems
            .iter()
            .enumerate()
            .map(|(i, m)| (meta(&format!("m{i}"), i as u32), set(m)))
            .collect();
        MemorizationSetFamily::new(members, set(universe), FamilyOrder::Scale).unwrap()
    }

    #[test]
    fn pair_overlap_examples() {
        let f = family(&[&["1", "2"], &["2", "3"]], &["1", "2", "3", "4"]);
        let p = f.pair_overlap("m0", "m1").unwrap();
        assert_eq!(
            p,
            PairOverlap {
                both_memorized: 1,
                both_unmemorized: 1,
                small_only: 1,
                large_only: 1
            }
        );

        let f = family(&[&[], &[]], &["1", "2"]);
        assert_eq!(f.pair_overlap("m0", "m1").unwrap().both_unmemorized, 2);
        let f = family(&[&["1", "2"], &["1", "2"]], &["1", "2"]);
        let p = f.pair_overlap("m0", "m1").unwrap();
        assert_eq!((p.both_memorized, p.total()), (2, 2));
    }

    #[test]
    fn pair_overlap_rejects_bad_pairs() {
        let f = family(&[&["1"], &["1"]], &["1"]);
        assert!(matches!(f.pair_overlap("m1", "m0"), Err(Error::InvalidParameter(_))));
        assert!(matches!(f.pair_overlap("m0", "m0"), Err(Error::InvalidParameter(_))));
        assert!(matches!(f.pair_overlap("m0", "zz"), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn newly_sets_examples() {
        let f = family(&[&["a"], &["a", "b"], &["b", "c"]], &["a", "b", "c", "d"]);
        assert_eq!(f.newly_memorized(2).unwrap(), set(&["c"]));
        assert_eq!(f.newly_forgotten(2).unwrap(), set(&["a"]));
        assert_eq!(f.newly_memorized(0).unwrap(), set(&["a"]));
        assert!(f.newly_forgotten(0).unwrap().is_empty());
        assert!(matches!(f.newly_memorized(3), Err(Error::IndexOutOfRange { .. })));

        let (new, gone) = f.newly_rates(2, RateBase::Universe).unwrap();
        assert_eq!((new, gone), (0.25, 0.25));
        let (new, gone) = f.newly_rates(2, RateBase::CurrentMemorized).unwrap();
        assert_eq!((new, gone), (0.5, 0.5));
        assert_eq!(f.newly_rates(0, RateBase::Universe).unwrap().1, 0.0);
    }

    #[test]
    fn stationary_family_has_zero_rates() {
        let f = family(&[&["a", "b"], &["a", "b"], &["a", "b"]], &["a", "b", "c"]);
        for k in 1..3 {
            assert_eq!(f.newly_rates(k, RateBase::Universe).unwrap(), (0.0, 0.0));
        }
    }

    #[test]
    fn first_scale_examples() {
        let f = family(&[&[], &["x"], &["x"]], &["x", "y"]);
        assert_eq!(f.first_memorized_scale("x").unwrap(), Some(1));
        assert_eq!(f.first_memorized_scale("y").unwrap(), None);
        assert!(matches!(f.first_memorized_scale("q"), Err(Error::UnknownSample(_))));
        let f = family(&[&["x"]], &["x"]);
        assert_eq!(f.first_memorized_scale("x").unwrap(), Some(0));
    }

    #[test]
    fn checkpoint_order_uses_training_step() {
        // training steps run opposite to scale rank in `meta`
        let members = vec![(meta("a", 0), set(&["1"])), (meta("b", 1), set(&["2"]))];
        let f = MemorizationSetFamily::new(members, set(&["1", "2"]), FamilyOrder::Step).unwrap();
        assert_eq!(f.models()[0].model_id, "b");
        assert!(f.pair_overlap("b", "a").is_ok());
    }

    #[test]
    fn construction_checks() {
        let dup = vec![(meta("a", 0), set(&[])), (meta("b", 0), set(&[]))];
        assert!(MemorizationSetFamily::new(dup, set(&[]), FamilyOrder::Scale).is_err());
        let stray = vec![(meta("a", 0), set(&["z"]))];
        assert!(MemorizationSetFamily::new(stray, set(&["y"]), FamilyOrder::Scale).is_err());
    }
}
