// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use rayon::prelude::*;

use super::ingest::{load_generations, load_samples};
use super::rows::{write_table, IntensityRow, ManifestRow, PerturbedScoreRow, ScoreRow};
use super::{CommonOptions, RunOutcome, ScoreArgs};
use crate::characteristics::{mean_uncertainty, sequence_entropy};
use crate::error::{Error, Result};
use crate::io::{self, SkipEntry};
use crate::ngram::{classify_memorized, memorization_score_with};
use crate::perturbation::score_change;
use crate::types::{GenerationRecord, SampleRecord};
use crate::validate::validate_models;

pub const SCORES_CSV: &str = "scores.csv";
pub const SCORES_JSONL: &str = "scores.jsonl";
pub const MODELS_CSV: &str = "models.csv";
pub const PERTURBED_SCORES_CSV: &str = "perturbed_scores.csv";

fn uncertainty_of(g: &GenerationRecord) -> Option<f64> {
    g.step_entropies.as_deref().and_then(|e| mean_uncertainty(e).ok())
}

/// Scores every generation at every n against its sample's continuation.
/// Output is sorted by `(sample_id, model_id, n)`.
pub(crate) fn score_generations(
    samples: &HashMap<&str, &SampleRecord>,
    generations: &[GenerationRecord],
    common: &CommonOptions,
    source: &str,
    seed: Option<u64>,
) -> (Vec<ScoreRow>, Vec<SkipEntry>) {
    let per_record: Vec<Vec<std::result::Result<ScoreRow, SkipEntry>>> = generations
        .par_iter()
        .map(|g| {
            let Some(sample) = samples.get(g.sample_id.as_str()) else {
                return vec![Err(SkipEntry::new(
                    source,
                    0,
                    format!("model `{}`: unknown sample `{}`", g.model_id, g.sample_id),
                ))];
            };
            let uncertainty = uncertainty_of(g);
            common
                .ns
                .iter()
                .map(|&n| {
                    let score = memorization_score_with(&g.generated, &sample.continuation, n, common.score)
                        .and_then(|s| Ok((s, classify_memorized(s, common.threshold)?)));
                    match score {
                        Ok((score, memorized)) => Ok(ScoreRow {
                            sample_id: g.sample_id.clone(),
                            model_id: g.model_id.clone(),
                            n,
                            score,
                            memorized,
                            seed,
                            mean_uncertainty: uncertainty,
                        }),
                        Err(e) => Err(SkipEntry::new(
                            source,
                            0,
                            format!("sample `{}` model `{}` n={n}: {e}", g.sample_id, g.model_id),
                        )),
                    }
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for r in per_record.into_iter().flatten() {
        match r {
            Ok(row) => rows.push(row),
            Err(s) => skipped.push(s),
        }
    }
    rows.sort_by(|a, b| (&a.sample_id, &a.model_id, a.n).cmp(&(&b.sample_id, &b.model_id, b.n)));
    (rows, skipped)
}

pub(crate) fn score_command(common: &CommonOptions, args: &ScoreArgs) -> Result<RunOutcome> {
    let mut outcome = RunOutcome::default();
    let (samples, skipped) = load_samples(&args.samples, common)?;
    outcome.skipped.extend(skipped);
    let (generations, skipped) = load_generations(&args.generations, common)?;
    outcome.skipped.extend(skipped);

    let by_id: HashMap<&str, &SampleRecord> = samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    let source = args.generations.display().to_string();
    let (rows, skipped) = score_generations(&by_id, &generations, common, &source, None);
    outcome.skipped.extend(skipped);

    let csv_path = common.out_dir.join(SCORES_CSV);
    write_table(&csv_path, &rows)?;
    outcome.wrote(csv_path);
    let jsonl_path = common.out_dir.join(SCORES_JSONL);
    io::write_jsonl(&jsonl_path, &rows)?;
    outcome.wrote(jsonl_path);

    if let Some(models_path) = &args.models {
        let models = io::read_models(models_path)?;
        let report = validate_models(&models);
        if let Some(v) = report.violations.first() {
            return Err(Error::Validation {
                path: models_path.clone(),
                count: report.violations.len(),
                first: v.to_string(),
            });
        }
        let path = common.out_dir.join(MODELS_CSV);
        io::write_models(&path, &models)?;
        outcome.wrote(path);
    }

    if let Some(dir) = &args.perturbed {
        let (perturbed_rows, skipped) = score_perturbed(common, dir, &by_id, &rows)?;
        outcome.skipped.extend(skipped);
        let path = common.out_dir.join(PERTURBED_SCORES_CSV);
        write_table(&path, &perturbed_rows)?;
        outcome.wrote(path);
    }
    Ok(outcome)
}

fn score_perturbed(
    common: &CommonOptions,
    dir: &std::path::Path,
    samples: &HashMap<&str, &SampleRecord>,
    originals: &[ScoreRow],
) -> Result<(Vec<PerturbedScoreRow>, Vec<SkipEntry>)> {
    let manifest: Vec<ManifestRow> = io::read_csv(&io::ensure_exists(&dir.join(super::sweep::MANIFEST_CSV))?)?;
    let intensity: Vec<IntensityRow> = io::read_csv(&io::ensure_exists(&dir.join(super::sweep::INTENSITY_CSV))?)?;
    let intensity: HashMap<(&str, &str), &IntensityRow> = intensity
        .iter()
        .map(|r| ((r.variant.as_str(), r.sample_id.as_str()), r))
        .collect();
    let original: HashMap<(&str, &str, usize), &ScoreRow> = originals
        .iter()
        .map(|r| ((r.sample_id.as_str(), r.model_id.as_str(), r.n), r))
        .collect();

    let redundancy: HashMap<&str, Result<f64>> = samples
        .iter()
        .map(|(&id, s)| (id, sequence_entropy(&s.prefix)))
        .collect();

    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for variant in &manifest {
        let gen_path = io::ensure_exists(&dir.join("generations").join(format!("{}.jsonl", variant.variant)))?;
        let (generations, skips) = load_generations(&gen_path, common)?;
        skipped.extend(skips);
        let source = gen_path.display().to_string();
        let (rows, skips) = score_generations(samples, &generations, common, &source, Some(variant.seed));
        skipped.extend(skips);
        let uncertainty: HashMap<(&str, &str), Option<f64>> = generations
            .iter()
            .map(|g| ((g.sample_id.as_str(), g.model_id.as_str()), uncertainty_of(g)))
            .collect();

        for row in rows {
            let key = (row.sample_id.as_str(), row.model_id.as_str(), row.n);
            let Some(orig) = original.get(&key).map(|o| ScoreRow::clone(o)) else {
                skipped.push(SkipEntry::new(
                    &source,
                    0,
                    format!(
                        "sample `{}` model `{}` n={}: no unperturbed score",
                        row.sample_id, row.model_id, row.n
                    ),
                ));
                continue;
            };
            let Some((combined, actual_ops)) = intensity
                .get(&(variant.variant.as_str(), row.sample_id.as_str()))
                .map(|r| (r.combined, r.actual_ops))
            else {
                skipped.push(SkipEntry::new(
                    &source,
                    0,
                    format!(
                        "sample `{}`: no intensity row for variant `{}`",
                        row.sample_id, variant.variant
                    ),
                ));
                continue;
            };
            let redundancy_bits = match &redundancy[row.sample_id.as_str()] {
                Ok(h) => *h,
                Err(e) => {
                    skipped.push(SkipEntry::new(&source, 0, format!("sample `{}`: {e}", row.sample_id)));
                    continue;
                }
            };
            out.push(PerturbedScoreRow {
                score_change: score_change(row.score, orig.score)?,
                mean_uncertainty: uncertainty
                    .get(&(row.sample_id.as_str(), row.model_id.as_str()))
                    .copied()
                    .flatten(),
                sample_id: row.sample_id,
                model_id: row.model_id,
                n: row.n,
                seed: variant.seed,
                variant: variant.variant.clone(),
                kind: variant.kind,
                strength: variant.strength,
                pool: variant.pool,
                score: row.score,
                memorized: row.memorized,
                original_score: orig.score,
                original_memorized: orig.memorized,
                combined,
                actual_ops,
                original_mean_uncertainty: orig.mean_uncertainty,
                redundancy_bits,
            });
        }
    }
    Ok((out, skipped))
}
