// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{CommonOptions, RunOutcome, ValidateArgs};
use crate::error::{Error, Result};
use crate::io::{self, IngestMode, SkipEntry};
use crate::rng::subsample;
use crate::types::{GenerationRecord, SampleRecord};
use crate::validate::{validate_dataset_with, validate_generations, validate_models, ValidationReport};

/// Reads records, then drops (lenient) or rejects (strict) the ones that
/// violate `check`.
fn load_checked<T, F>(path: &Path, mode: IngestMode, check: F) -> Result<(Vec<T>, Vec<SkipEntry>)>
where
    T: DeserializeOwned,
    F: FnOnce(&[T]) -> ValidationReport,
{
    let loaded = io::read_jsonl::<T>(path, mode)?;
    let report = check(&loaded.records);
    if report.is_ok() {
        return Ok((loaded.records, loaded.skipped));
    }
    if mode == IngestMode::Strict {
        return Err(Error::Validation {
            path: path.to_path_buf(),
            count: report.violations.len(),
            first: report.violations[0].to_string(),
        });
    }
    let source = path.display().to_string();
    let mut skipped = loaded.skipped;
    skipped.extend(report.violations.iter().map(|v| {
        SkipEntry::new(
            &source,
            loaded.lines[v.index],
            format!("`{}`: {}", v.record_id, v.reason),
        )
    }));
    skipped.sort_by_key(|s| s.line);
    let bad = report.bad_indices();
    let records = loaded
        .records
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !bad.contains(i))
        .map(|(_, r)| r)
        .collect();
    Ok((records, skipped))
}

pub(crate) fn load_samples(path: &Path, common: &CommonOptions) -> Result<(Vec<SampleRecord>, Vec<SkipEntry>)> {
    load_checked(path, common.ingest, |recs| validate_dataset_with(recs, common.lengths))
}

pub(crate) fn load_generations(path: &Path, common: &CommonOptions) -> Result<(Vec<GenerationRecord>, Vec<SkipEntry>)> {
    load_checked(path, common.ingest, validate_generations)
}

#[derive(Serialize)]
struct FileReport {
    path: String,
    parse_errors: Vec<SkipEntry>,
    #[serde(flatten)]
    report: ValidationReport,
}

impl FileReport {
    fn problems(&self) -> usize {
        self.parse_errors.len() + self.report.violations.len()
    }
}

fn check_file<T, F>(path: &Path, check: F) -> Result<(FileReport, Vec<T>)>
where
    T: DeserializeOwned,
    F: FnOnce(&[T]) -> ValidationReport,
{
    let loaded = io::read_jsonl::<T>(path, IngestMode::Lenient)?;
    let mut report = check(&loaded.records);
    // report source lines rather than record positions
    for v in &mut report.violations {
        v.index = loaded.lines[v.index];
    }
    let bad: Vec<usize> = report.violations.iter().map(|v| v.index).collect();
    let valid = loaded
        .records
        .into_iter()
        .zip(&loaded.lines)
        .filter(|(_, line)| !bad.contains(line))
        .map(|(r, _)| r)
        .collect();
    Ok((
        FileReport {
            path: path.display().to_string(),
            parse_errors: loaded.skipped,
            report,
        },
        valid,
    ))
}

/// Writes `validation.json`; violations are counted, never fatal.
pub(crate) fn validate_command(common: &CommonOptions, args: &ValidateArgs) -> Result<RunOutcome> {
    let mut outcome = RunOutcome::default();
    let mut reports = Vec::new();

    let (report, samples) = check_file::<SampleRecord, _>(&args.samples, |r| validate_dataset_with(r, common.lengths))?;
    reports.push(report);
    if let Some(path) = &args.generations {
        let (report, _) = check_file::<GenerationRecord, _>(path, validate_generations)?;
        reports.push(report);
    }
    if let Some(path) = &args.models {
        let models = io::read_models(path)?;
        let mut report = validate_models(&models);
        // CSV data starts on line 2
        for v in &mut report.violations {
            v.index += 2;
        }
        reports.push(FileReport {
            path: path.display().to_string(),
            parse_errors: Vec::new(),
            report,
        });
    }

    outcome.violations = reports.iter().map(FileReport::problems).sum();
    for r in &reports {
        for e in &r.parse_errors {
            log::warn!("{}", e.render());
        }
        for v in &r.report.violations {
            log::warn!("{}:{}: `{}`: {}", r.path, v.index, v.record_id, v.reason);
        }
    }
    let path = common.out_dir.join("validation.json");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(file, &reports)?;
    outcome.wrote(path);

    if let Some((k, seed)) = args.subsample {
        let picked = subsample(&samples, k, seed);
        let path = common.out_dir.join("samples.subsampled.jsonl");
        io::write_jsonl(&path, &picked)?;
        outcome.wrote(path);
    }
    Ok(outcome)
}
