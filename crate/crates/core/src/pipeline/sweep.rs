// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ingest::load_samples;
use super::rows::{write_table, IntensityRow, ManifestRow};
use super::{CommonOptions, PerturbArgs, RunOutcome};
use crate::error::{Error, Result};
use crate::io::{self, SkipEntry};
use crate::perturbation::{
    build_frequency_pools, perturb_sample, DeleteTarget, FrequencyPool, PerturbOptions, PerturbScope, PerturbationKind,
    PerturbationSpec, DEFAULT_ALPHA, DEFAULT_POOL_SIZE,
};

pub const MANIFEST_CSV: &str = "manifest.csv";
pub const INTENSITY_CSV: &str = "intensity.csv";
pub const PERTURBED_DIR: &str = "perturbed";

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_pool_size() -> usize {
    DEFAULT_POOL_SIZE
}

fn default_pools() -> Vec<FrequencyPool> {
    vec![FrequencyPool::High, FrequencyPool::Low]
}

/// One perturbation kind swept over strengths (and pools, for edits).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub kind: PerturbationKind,
    /// Ratios in `[0, 1]` for shuffles, whole operation counts for edits.
    pub strengths: Vec<f64>,
    #[serde(default = "default_pools")]
    pub pools: Vec<FrequencyPool>,
}

/// Perturbation spec file (TOML):
///
/// ```toml
/// seeds = [0, 1, 2]
/// alpha = 0.5
/// scope = "prefix"          # or "full"
/// delete_target = "pool"    # or "any"
/// pool_size = 250
///
/// [[sweep]]
/// kind = "shuffle"
/// strengths = [0.1, 0.3, 0.5, 0.7, 0.9]
///
/// [[sweep]]
/// kind = "delete"
/// strengths = [2, 4, 8, 16]
/// pools = ["high", "low"]
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub scope: PerturbScope,
    #[serde(default)]
    pub delete_target: DeleteTarget,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(rename = "sweep", default)]
    pub sweeps: Vec<SweepEntry>,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("perturbation spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("perturbation spec lists no seeds"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.sweeps.is_empty() {
            return Err(Error::invalid("perturbation spec has no [[sweep]] entries"));
        }
        for s in &self.sweeps {
            for &v in &s.strengths {
                let ok = match s.kind {
                    PerturbationKind::Shuffle => (0.0..=1.0).contains(&v),
                    _ => v >= 0.0 && v.fract() == 0.0,
                };
                if !ok {
                    return Err(Error::invalid(format!("invalid {} strength {v}", s.kind)));
                }
            }
            if s.kind != PerturbationKind::Shuffle && s.pools.is_empty() {
                return Err(Error::invalid(format!("{} sweep lists no pools", s.kind)));
            }
        }
        Ok(())
    }

    pub fn options(&self) -> PerturbOptions {
        PerturbOptions {
            alpha: self.alpha,
            scope: self.scope,
            delete_target: self.delete_target,
        }
    }

    /// Every (kind, strength, pool, seed) combination, in file order.
    pub fn specs(&self) -> Vec<PerturbationSpec> {
        let mut out = Vec::new();
        for s in &self.sweeps {
            for &strength in &s.strengths {
                let pools: &[FrequencyPool] = if s.kind == PerturbationKind::Shuffle {
                    &[FrequencyPool::High]
                } else {
                    &s.pools
                };
                for &pool in pools {
                    for &seed in &self.seeds {
                        let count = strength as usize;
                        out.push(match s.kind {
                            PerturbationKind::Shuffle => PerturbationSpec::Shuffle { ratio: strength, seed },
                            PerturbationKind::Delete => PerturbationSpec::Delete { count, pool, seed },
                            PerturbationKind::Insert => PerturbationSpec::Insert { count, pool, seed },
                            PerturbationKind::Replace => PerturbationSpec::Replace { count, pool, seed },
                        });
                    }
                }
            }
        }
        out
    }
}

pub(crate) fn perturb_command(common: &CommonOptions, args: &PerturbArgs) -> Result<RunOutcome> {
    let mut outcome = RunOutcome::default();
    let (samples, skipped) = load_samples(&args.samples, common)?;
    outcome.skipped.extend(skipped);

    let specs = args.spec.specs();
    let needs_pools = specs.iter().any(|s| s.pool().is_some());
    let pools = match (&args.frequencies, needs_pools) {
        (Some(path), true) => Some(build_frequency_pools(
            &io::read_frequency_table(path)?,
            args.spec.pool_size,
        )?),
        (None, true) => return Err(Error::invalid("edit perturbations need a frequency table")),
        _ => None,
    };
    let opts = args.spec.options();
    let source = args.samples.display().to_string();

    let mut manifest = Vec::new();
    let mut intensity = Vec::new();
    std::fs::create_dir_all(common.out_dir.join("generations"))
        .map_err(|e| Error::io(common.out_dir.join("generations"), e))?;
    for spec in &specs {
        let variant = spec.variant_id();
        let results: Vec<_> = samples
            .par_iter()
            .map(|s| perturb_sample(s, spec, pools.as_ref(), &opts))
            .collect();
        let mut records = Vec::new();
        for (sample, result) in samples.iter().zip(results) {
            match result {
                Ok(p) => {
                    intensity.push(IntensityRow {
                        sample_id: sample.sample_id.clone(),
                        variant: variant.clone(),
                        kind: spec.kind(),
                        strength: spec.strength(),
                        pool: spec.pool(),
                        seed: spec.seed(),
                        position_shift: p.metrics.map(|m| m.position_shift),
                        relative_ordering: p.metrics.map(|m| m.relative_ordering),
                        combined: p.metrics.map(|m| m.combined),
                        actual_ops: p.actual_ops,
                    });
                    records.push(p.record);
                }
                Err(e) => outcome.skipped.push(SkipEntry::new(
                    &source,
                    0,
                    format!("`{}` variant {variant}: {e}", sample.sample_id),
                )),
            }
        }
        let file = format!("{PERTURBED_DIR}/{variant}.jsonl");
        let path = common.out_dir.join(&file);
        io::write_jsonl(&path, &records)?;
        outcome.wrote(path);
        manifest.push(ManifestRow {
            variant,
            kind: spec.kind(),
            strength: spec.strength(),
            pool: spec.pool(),
            seed: spec.seed(),
            file,
            records: records.len(),
        });
    }

    let path = common.out_dir.join(MANIFEST_CSV);
    write_table(&path, &manifest)?;
    outcome.wrote(path);
    let path = common.out_dir.join(INTENSITY_CSV);
    write_table(&path, &intensity)?;
    outcome.wrote(path);
    let path = common.out_dir.join("sweep.resolved.toml");
    std::fs::write(&path, args.spec.to_toml()).map_err(|e| Error::io(&path, e))?;
    outcome.wrote(path);
    Ok(outcome)
}
