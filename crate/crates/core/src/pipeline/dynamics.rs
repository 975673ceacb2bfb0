// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use super::rows::{write_table, FirstMemorizedRow, NewlyRatesRow, OverlapPairRow, ScoreRow};
use super::scoring::SCORES_CSV;
use super::{CommonOptions, OverlapArgs, RunOutcome};
use crate::error::Result;
use crate::io::{self, SkipEntry};
use crate::overlap::{MemorizationSetFamily, RateBase};
use crate::types::{FamilyOrder, ModelMeta};

pub const OVERLAP_PAIRS_CSV: &str = "overlap_pairs.csv";
pub const OVERLAP_MATRICES_CSV: &str = "overlap_matrices.csv";
pub const NEWLY_RATES_CSV: &str = "newly_rates.csv";
pub const FIRST_MEMORIZED_CSV: &str = "first_memorized.csv";

/// Builds one family per n from score rows. Members are the metadata
/// models scored at that n; the universe is the samples scored by every
/// member.
pub(crate) fn build_families(
    scores: &[ScoreRow],
    models: &[ModelMeta],
    order: FamilyOrder,
    ns: &[usize],
) -> Result<(Vec<(usize, MemorizationSetFamily)>, Vec<SkipEntry>)> {
    let meta: HashMap<&str, &ModelMeta> = models.iter().map(|m| (m.model_id.as_str(), m)).collect();
    let wanted: BTreeSet<usize> = ns.iter().copied().collect();
    let mut skipped = Vec::new();

    // n -> model -> (scored samples, memorized samples)
    type Sets = (BTreeSet<String>, BTreeSet<String>);
    let mut by_n: BTreeMap<usize, BTreeMap<&str, Sets>> = BTreeMap::new();
    let mut unknown: BTreeSet<&str> = BTreeSet::new();
    for row in scores.iter().filter(|r| wanted.contains(&r.n)) {
        if !meta.contains_key(row.model_id.as_str()) {
            unknown.insert(&row.model_id);
            continue;
        }
        let entry = by_n.entry(row.n).or_default().entry(&row.model_id).or_default();
        entry.0.insert(row.sample_id.clone());
        if row.memorized {
            entry.1.insert(row.sample_id.clone());
        }
    }
    for m in unknown {
        skipped.push(SkipEntry::new(SCORES_CSV, 0, format!("model `{m}` has no metadata")));
    }

    let mut families = Vec::new();
    for (n, per_model) in by_n {
        let mut universe: Option<BTreeSet<String>> = None;
        for (scored, _) in per_model.values() {
            universe = Some(match universe {
                None => scored.clone(),
                Some(u) => u.intersection(scored).cloned().collect(),
            });
        }
        let universe = universe.unwrap_or_default();
        let all: BTreeSet<&String> = per_model.values().flat_map(|(s, _)| s).collect();
        for s in all.into_iter().filter(|s| !universe.contains(*s)) {
            skipped.push(SkipEntry::new(
                SCORES_CSV,
                0,
                format!("sample `{s}` n={n}: not scored for every model, left out of the overlap universe"),
            ));
        }
        let members = per_model
            .into_iter()
            .map(|(id, (_, mem))| {
                let mem = mem.into_iter().filter(|s| universe.contains(s)).collect();
                (meta[id].clone(), mem)
            })
            .collect();
        families.push((n, MemorizationSetFamily::new(members, universe, order)?));
    }
    Ok((families, skipped))
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

/// Writes pair, matrix, newly-rates and first-memorized tables. Families
/// with fewer than two models contribute no rows.
pub(crate) fn write_overlap_tables(
    out_dir: &Path,
    families: &[(usize, MemorizationSetFamily)],
    base: RateBase,
) -> Result<Vec<PathBuf>> {
    let families: Vec<_> = families.iter().filter(|(_, f)| f.len() >= 2).collect();

    let mut pairs = Vec::new();
    let mut newly = Vec::new();
    let mut first = Vec::new();
    for (n, family) in &families {
        let u = family.universe().len();
        let models = family.models();
        for i in 0..models.len() {
            for j in i + 1..models.len() {
                let p = family.pair_overlap(&models[i].model_id, &models[j].model_id)?;
                pairs.push(OverlapPairRow {
                    n: *n,
                    small_model: models[i].model_id.clone(),
                    large_model: models[j].model_id.clone(),
                    universe: u,
                    both_memorized: p.both_memorized,
                    both_unmemorized: p.both_unmemorized,
                    small_only: p.small_only,
                    large_only: p.large_only,
                    both_memorized_pct: pct(p.both_memorized, u),
                    both_unmemorized_pct: pct(p.both_unmemorized, u),
                    small_only_pct: pct(p.small_only, u),
                    large_only_pct: pct(p.large_only, u),
                });
            }
        }
        if u > 0 {
            for (k, m) in models.iter().enumerate() {
                let (new_rate, gone_rate) = family.newly_rates(k, base)?;
                newly.push(NewlyRatesRow {
                    model_id: m.model_id.clone(),
                    n: *n,
                    position: k,
                    universe: u,
                    memorized: family.memorized(k)?.len(),
                    newly_memorized: family.newly_memorized(k)?.len(),
                    newly_forgotten: family.newly_forgotten(k)?.len(),
                    newly_memorized_rate: new_rate,
                    newly_forgotten_rate: gone_rate,
                });
            }
        }
        for s in family.universe() {
            let k = family.first_memorized_scale(s)?;
            first.push(FirstMemorizedRow {
                sample_id: s.clone(),
                n: *n,
                first_position: k,
                first_model_id: k.map(|k| models[k].model_id.clone()),
            });
        }
    }
    first.sort_by(|a, b| (&a.sample_id, a.n).cmp(&(&b.sample_id, b.n)));

    let mut files = Vec::new();
    let path = out_dir.join(OVERLAP_PAIRS_CSV);
    write_table(&path, &pairs)?;
    files.push(path);
    let path = out_dir.join(NEWLY_RATES_CSV);
    write_table(&path, &newly)?;
    files.push(path);
    let path = out_dir.join(FIRST_MEMORIZED_CSV);
    write_table(&path, &first)?;
    files.push(path);
    let path = out_dir.join(OVERLAP_MATRICES_CSV);
    write_matrices(&path, &families)?;
    files.push(path);
    Ok(files)
}

/// Square matrices per (n, category, unit). Cell (row, col) counts samples
/// memorized by both, by neither, or by the row model only; `pct` cells are
/// percentages of the universe.
fn write_matrices(path: &Path, families: &[&(usize, MemorizationSetFamily)]) -> Result<()> {
    let mut columns: Vec<(u64, u64, String)> = Vec::new();
    for (_, f) in families {
        for m in f.models() {
            let key = (u64::from(m.scale_rank), m.training_step, m.model_id.clone());
            if !columns.contains(&key) {
                columns.push(key);
            }
        }
    }
    columns.sort();
    let ids: Vec<&str> = columns.iter().map(|c| c.2.as_str()).collect();

    let mut header = vec!["n", "category", "unit", "row_model"];
    header.extend(ids.iter().copied());
    let mut records: Vec<Vec<String>> = Vec::new();
    for (n, family) in families {
        let u = family.universe().len();
        let index: HashMap<&str, usize> = family
            .models()
            .iter()
            .enumerate()
            .map(|(i, m)| (m.model_id.as_str(), i))
            .collect();
        for category in ["both_memorized", "both_unmemorized", "row_only"] {
            for unit in ["count", "pct"] {
                for row_id in ids.iter().filter(|id| index.contains_key(*id)) {
                    let a = family.memorized(index[row_id])?;
                    let mut rec = vec![n.to_string(), category.into(), unit.into(), row_id.to_string()];
                    for col_id in &ids {
                        let Some(&j) = index.get(col_id) else {
                            rec.push(String::new());
                            continue;
                        };
                        let b = family.memorized(j)?;
                        let both = a.intersection(b).count();
                        let count = match category {
                            "both_memorized" => both,
                            "both_unmemorized" => u - (a.len() + b.len() - both),
                            _ => a.len() - both,
                        };
                        rec.push(match unit {
                            "count" => count.to_string(),
                            _ => pct(count, u).to_string(),
                        });
                    }
                    records.push(rec);
                }
            }
        }
    }
    io::write_csv_records(path, &header, records)
}

pub(crate) fn overlap_command(common: &CommonOptions, args: &OverlapArgs) -> Result<RunOutcome> {
    let mut outcome = RunOutcome::default();
    let scores: Vec<ScoreRow> = io::read_csv(&args.scores)?;
    let models = io::read_models(&args.models)?;
    let (families, skipped) = build_families(&scores, &models, args.order, &common.ns)?;
    outcome.skipped.extend(skipped);
    outcome
        .files
        .extend(write_overlap_tables(&common.out_dir, &families, args.rate_base)?);
    Ok(outcome)
}
