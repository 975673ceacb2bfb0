// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use super::ingest::{load_generations, load_samples};
use super::rows::{write_table, CharacteristicCurveRow, ScoreRow};
use super::{CharacteristicsArgs, CommonOptions, RunOutcome};
use crate::characteristics::{
    bin_aggregate, characterize, Binning, CharacteristicRecord, CurvePoint, RepetitionCounter, GROUP_MEMORIZED,
    GROUP_NON_MEMORIZED,
};
use crate::error::Result;
use crate::io::{self, SkipEntry};

pub const CHARACTERISTICS_CSV: &str = "characteristics.csv";
pub const CURVES_CSV: &str = "characteristic_curves.csv";

type Accessor = fn(&CharacteristicRecord) -> Option<f64>;

const CHARACTERISTICS: [(&str, Accessor); 7] = [
    ("avg_token_freq", |c| Some(c.avg_token_freq)),
    ("repetitions", |c| c.repetitions.map(|r| r as f64)),
    ("prompt_perplexity", |c| c.prompt_perplexity),
    ("huffman_bits_per_token", |c| Some(c.huffman_bits_per_token)),
    ("huffman_compression_ratio", |c| c.huffman_compression_ratio),
    ("sequence_entropy_bits", |c| Some(c.sequence_entropy_bits)),
    ("prefix_entropy_bits", |c| Some(c.prefix_entropy_bits)),
];

/// Binned mean score per characteristic, for every (model, n) in `scores`.
pub(crate) fn characteristic_curves(
    chars: &[CharacteristicRecord],
    scores: &[ScoreRow],
    bins: usize,
    binning: Binning,
) -> Result<Vec<CharacteristicCurveRow>> {
    let by_sample: HashMap<&str, &CharacteristicRecord> = chars.iter().map(|c| (c.sample_id.as_str(), c)).collect();
    let mut groups: BTreeMap<(&str, usize), Vec<&ScoreRow>> = BTreeMap::new();
    for row in scores {
        groups.entry((&row.model_id, row.n)).or_default().push(row);
    }

    let mut out = Vec::new();
    for ((model_id, n), rows) in groups {
        for (name, get) in CHARACTERISTICS {
            let points: Vec<CurvePoint> = rows
                .iter()
                .filter_map(|r| {
                    let x = get(by_sample.get(r.sample_id.as_str())?)?;
                    x.is_finite().then(|| CurvePoint {
                        x,
                        score: r.score,
                        group: if r.memorized {
                            GROUP_MEMORIZED
                        } else {
                            GROUP_NON_MEMORIZED
                        }
                        .to_string(),
                    })
                })
                .collect();
            if points.is_empty() {
                continue;
            }
            for curve in bin_aggregate(name, &points, bins, binning)? {
                out.extend(curve.points.into_iter().map(|p| CharacteristicCurveRow {
                    model_id: model_id.to_string(),
                    n,
                    characteristic: curve.characteristic.clone(),
                    group: curve.group.clone(),
                    bin_center: p.bin_center,
                    mean_score: p.mean_score,
                    count: p.count,
                }));
            }
        }
    }
    Ok(out)
}

pub(crate) fn characteristics_command(common: &CommonOptions, args: &CharacteristicsArgs) -> Result<RunOutcome> {
    let mut outcome = RunOutcome::default();
    let (samples, skipped) = load_samples(&args.samples, common)?;
    outcome.skipped.extend(skipped);
    let table = io::read_frequency_table(&args.frequencies)?;

    let repetitions: Option<HashMap<String, u64>> = if let Some((path, format)) = &args.corpus {
        let mut counter = RepetitionCounter::new(samples.iter().map(|s| s.full_sequence().into_inner()).collect())?;
        let scanned = io::scan_corpus(path, *format, &mut counter)?;
        log::info!("scanned {scanned} corpus tokens");
        Some(
            samples
                .iter()
                .zip(counter.into_counts())
                .map(|(s, c)| (s.sample_id.clone(), c))
                .collect(),
        )
    } else if let Some(path) = &args.repetitions {
        Some(io::read_repetitions(path)?.into_iter().collect())
    } else {
        None
    };

    let mut prompt_logprobs: HashMap<String, Vec<f64>> = HashMap::new();
    if let Some(path) = &args.prompt_logprobs {
        let source = path.display().to_string();
        let (records, skipped) = load_generations(path, common)?;
        outcome.skipped.extend(skipped);
        let prefixes: HashMap<&str, &[u32]> = samples.iter().map(|s| (s.sample_id.as_str(), &s.prefix[..])).collect();
        for rec in records {
            let reason = match (prefixes.get(rec.sample_id.as_str()), &rec.step_logprobs) {
                (None, _) => Some("unknown sample".to_string()),
                (_, None) => Some("no step_logprobs".to_string()),
                (Some(p), _) if *p != &rec.generated[..] => Some("scored tokens differ from the prefix".to_string()),
                _ if prompt_logprobs.contains_key(&rec.sample_id) => {
                    Some(format!("second scoring record (model `{}`) ignored", rec.model_id))
                }
                _ => None,
            };
            match reason {
                Some(r) => outcome
                    .skipped
                    .push(SkipEntry::new(&source, 0, format!("sample `{}`: {r}", rec.sample_id))),
                None => {
                    prompt_logprobs.insert(rec.sample_id, rec.step_logprobs.unwrap_or_default());
                }
            }
        }
    }

    let results: Vec<std::result::Result<CharacteristicRecord, SkipEntry>> = samples
        .par_iter()
        .map(|s| {
            let reps = repetitions.as_ref().and_then(|r| r.get(&s.sample_id).copied());
            characterize(
                s,
                &table,
                reps,
                prompt_logprobs.get(&s.sample_id).map(Vec::as_slice),
                args.entropy_scope,
            )
            .map_err(|e| SkipEntry::new(args.samples.display().to_string(), 0, format!("`{}`: {e}", s.sample_id)))
        })
        .collect();
    let mut chars = Vec::new();
    for r in results {
        match r {
            Ok(c) => chars.push(c),
            Err(s) => outcome.skipped.push(s),
        }
    }
    chars.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let path = common.out_dir.join(CHARACTERISTICS_CSV);
    write_table(&path, &chars)?;
    outcome.wrote(path);

    if let Some(scores_path) = &args.scores {
        let scores: Vec<ScoreRow> = io::read_csv(scores_path)?;
        let curves = characteristic_curves(&chars, &scores, args.bins, args.binning)?;
        let path = common.out_dir.join(CURVES_CSV);
        write_table(&path, &curves)?;
        outcome.wrote(path);
    }
    Ok(outcome)
}
