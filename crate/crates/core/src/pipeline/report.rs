// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, HashMap};

use super::dynamics::{build_families, write_overlap_tables};
use super::profile::{characteristic_curves, CHARACTERISTICS_CSV, CURVES_CSV};
use super::rows::{
    write_table, EfficiencyRow, MemorizationCountRow, PerturbationResponseRow, PerturbedScoreRow, ScoreRow,
};
use super::scoring::{MODELS_CSV, PERTURBED_SCORES_CSV, SCORES_CSV};
use super::{CommonOptions, ReportArgs, RunOutcome};
use crate::characteristics::{CharacteristicRecord, GROUP_ALL, GROUP_MEMORIZED, GROUP_NON_MEMORIZED};
use crate::error::Result;
use crate::io::{self, SkipEntry};
use crate::ngram::memorization_efficiency;
use crate::types::ModelMeta;

pub const COUNTS_BY_SCALE_CSV: &str = "counts_by_scale.csv";
pub const RATE_BY_CHECKPOINT_CSV: &str = "rate_by_checkpoint.csv";
pub const EFFICIENCY_BY_SCALE_CSV: &str = "efficiency_by_scale.csv";
pub const PERTURBATION_RESPONSE_CSV: &str = "perturbation_response.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RedundancyGroup {
    /// Prefix entropy in the lower half.
    High,
    /// Prefix entropy in the upper half.
    Low,
}

impl RedundancyGroup {
    pub fn label(self) -> &'static str {
        match self {
            RedundancyGroup::High => "high_redundancy",
            RedundancyGroup::Low => "low_redundancy",
        }
    }
}

/// Median split of samples by prefix entropy. Ranks are taken over
/// `(entropy, sample_id)`, so group sizes differ by at most one even with
/// tied entropies.
pub fn redundancy_split<'a, I>(entropies: I) -> HashMap<String, RedundancyGroup>
where
    I: IntoIterator<Item = (&'a str, f64)>,
{
    let mut ranked: Vec<(f64, &str)> = entropies.into_iter().map(|(s, h)| (h, s)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    ranked.dedup_by(|a, b| a.1 == b.1);
    let half = ranked.len() / 2;
    ranked
        .into_iter()
        .enumerate()
        .map(|(i, (_, s))| {
            let g = if i < half {
                RedundancyGroup::High
            } else {
                RedundancyGroup::Low
            };
            (s.to_string(), g)
        })
        .collect()
}

fn count_rows(scores: &[ScoreRow], models: &[ModelMeta]) -> (Vec<MemorizationCountRow>, Vec<SkipEntry>) {
    let meta: HashMap<&str, &ModelMeta> = models.iter().map(|m| (m.model_id.as_str(), m)).collect();
    let mut tally: BTreeMap<(&str, usize), (usize, usize)> = BTreeMap::new();
    for r in scores {
        let t = tally.entry((&r.model_id, r.n)).or_default();
        t.0 += usize::from(r.memorized);
        t.1 += 1;
    }
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for ((model_id, n), (memorized, total)) in tally {
        let Some(m) = meta.get(model_id) else {
            skipped.push(SkipEntry::new(
                SCORES_CSV,
                0,
                format!("model `{model_id}` n={n}: no metadata"),
            ));
            continue;
        };
        rows.push(MemorizationCountRow {
            model_id: model_id.to_string(),
            scale_rank: m.scale_rank,
            training_step: m.training_step,
            param_count: m.param_count,
            n,
            memorized_count: memorized,
            total,
            rate: memorized as f64 / total as f64,
        });
    }
    (rows, skipped)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

fn perturbation_response(rows: &[PerturbedScoreRow]) -> Vec<PerturbationResponseRow> {
    let split = redundancy_split(rows.iter().map(|r| (r.sample_id.as_str(), r.redundancy_bits)));

    type Key<'a> = (
        crate::perturbation::PerturbationKind,
        Option<crate::perturbation::FrequencyPool>,
        u64,
        &'a str,
        usize,
        &'static str,
    );
    let mut groups: HashMap<Key, Vec<&PerturbedScoreRow>> = HashMap::new();
    for r in rows {
        let memo = if r.original_memorized {
            GROUP_MEMORIZED
        } else {
            GROUP_NON_MEMORIZED
        };
        let redundancy = split[&r.sample_id].label();
        for g in [GROUP_ALL, memo, redundancy] {
            groups
                .entry((r.kind, r.pool, r.strength.to_bits(), &r.model_id, r.n, g))
                .or_default()
                .push(r);
        }
    }

    let mut out: Vec<PerturbationResponseRow> = groups
        .into_iter()
        .map(
            |((kind, pool, strength, model_id, n, group), members)| PerturbationResponseRow {
                kind,
                pool,
                strength: f64::from_bits(strength),
                model_id: model_id.to_string(),
                n,
                group: group.to_string(),
                count: members.len(),
                mean_score_change: mean(members.iter().map(|r| r.score_change)).unwrap_or(0.0),
                mean_uncertainty: mean(members.iter().filter_map(|r| r.mean_uncertainty)),
                mean_original_uncertainty: mean(members.iter().filter_map(|r| r.original_mean_uncertainty)),
                mean_combined: mean(members.iter().filter_map(|r| r.combined)),
            },
        )
        .collect();
    out.sort_by(|a, b| {
        (a.kind, a.pool)
            .cmp(&(b.kind, b.pool))
            .then(a.strength.total_cmp(&b.strength))
            .then((&a.model_id, a.n, &a.group).cmp(&(&b.model_id, b.n, &b.group)))
    });
    out
}

pub(crate) fn report_command(common: &CommonOptions, args: &ReportArgs) -> Result<RunOutcome> {
    let mut outcome = RunOutcome::default();
    let out = &common.out_dir;
    let scores: Vec<ScoreRow> = io::read_csv(&io::ensure_exists(&args.results.join(SCORES_CSV))?)?;
    let models = io::read_models(&io::ensure_exists(&args.results.join(MODELS_CSV))?)?;

    let (mut counts, skipped) = count_rows(&scores, &models);
    outcome.skipped.extend(skipped);
    counts.sort_by(|a, b| {
        (a.n, a.scale_rank, a.training_step, &a.model_id).cmp(&(b.n, b.scale_rank, b.training_step, &b.model_id))
    });
    let path = out.join(COUNTS_BY_SCALE_CSV);
    write_table(&path, &counts)?;
    outcome.wrote(path);

    counts.sort_by(|a, b| {
        (a.scale_rank, a.n, a.training_step, &a.model_id).cmp(&(b.scale_rank, b.n, b.training_step, &b.model_id))
    });
    let path = out.join(RATE_BY_CHECKPOINT_CSV);
    write_table(&path, &counts)?;
    outcome.wrote(path);

    let mut efficiency = counts
        .iter()
        .filter(|c| args.efficiency_ns.contains(&c.n))
        .map(|c| {
            Ok(EfficiencyRow {
                model_id: c.model_id.clone(),
                scale_rank: c.scale_rank,
                param_count: c.param_count,
                n: c.n,
                memorized_count: c.memorized_count,
                efficiency: memorization_efficiency(c.memorized_count as u64, c.param_count)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    efficiency.sort_by(|a, b| (a.n, a.scale_rank, &a.model_id).cmp(&(b.n, b.scale_rank, &b.model_id)));
    let path = out.join(EFFICIENCY_BY_SCALE_CSV);
    write_table(&path, &efficiency)?;
    outcome.wrote(path);

    let mut ns: Vec<usize> = scores.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let (families, skipped) = build_families(&scores, &models, args.order, &ns)?;
    outcome.skipped.extend(skipped);
    outcome
        .files
        .extend(write_overlap_tables(out, &families, args.rate_base)?);

    let chars_path = args.results.join(CHARACTERISTICS_CSV);
    if chars_path.exists() {
        let chars: Vec<CharacteristicRecord> = io::read_csv(&chars_path)?;
        let curves = characteristic_curves(&chars, &scores, args.bins, args.binning)?;
        let path = out.join(CURVES_CSV);
        write_table(&path, &curves)?;
        outcome.wrote(path);
    }

    let perturbed_path = args.results.join(PERTURBED_SCORES_CSV);
    if perturbed_path.exists() {
        let rows: Vec<PerturbedScoreRow> = io::read_csv(&perturbed_path)?;
        let response = perturbation_response(&rows);
        let path = out.join(PERTURBATION_RESPONSE_CSV);
        write_table(&path, &response)?;
        outcome.wrote(path);
    }
    Ok(outcome)
}
