// SPDX-License-Identifier: Apache-2.0

//! Orchestration of the analysis commands.
//!
//! Every command reads its inputs, runs a record-parallel map, sorts the
//! results into a fixed order and writes them under the output directory.
//! Per-record problems are written to `skipped.log` next to the outputs;
//! only unreadable inputs, strict-mode schema violations and missing
//! upstream artifacts abort a run.

mod dynamics;
mod ingest;
mod profile;
mod report;
mod rows;
mod scoring;
mod sweep;

use std::path::{Path, PathBuf};

use crate::characteristics::{Binning, EntropyScope};
use crate::error::{Error, Result};
use crate::io::{CorpusFormat, IngestMode, SkipEntry};
use crate::ngram::{NgramSemantics, ScoreOptions, DEFAULT_THRESHOLD};
use crate::overlap::RateBase;
use crate::perturbation::FrequencyPool;
use crate::types::FamilyOrder;
use crate::validate::LengthProfile;

pub use report::{redundancy_split, RedundancyGroup};
pub use rows::{
    CharacteristicCurveRow, EfficiencyRow, FirstMemorizedRow, IntensityRow, ManifestRow, MemorizationCountRow,
    NewlyRatesRow, OverlapPairRow, PerturbationResponseRow, PerturbedScoreRow, ScoreRow, TableRow,
};
pub use sweep::{SweepConfig, SweepEntry};

pub const DEFAULT_NS: [usize; 6] = [1, 2, 5, 10, 20, 32];
pub const DEFAULT_EFFICIENCY_NS: [usize; 3] = [5, 10, 20];
pub const DEFAULT_BINS: usize = 10;
pub const SKIP_LOG: &str = "skipped.log";

/// Options shared by every command.
#[derive(Clone, Debug)]
pub struct CommonOptions {
    pub out_dir: PathBuf,
    pub ns: Vec<usize>,
    pub threshold: f64,
    pub ingest: IngestMode,
    /// `None` disables the prefix/continuation length check.
    pub lengths: Option<LengthProfile>,
    pub score: ScoreOptions,
}

impl CommonOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        CommonOptions {
            out_dir: out_dir.into(),
            ns: DEFAULT_NS.to_vec(),
            threshold: DEFAULT_THRESHOLD,
            ingest: IngestMode::Lenient,
            lengths: Some(LengthProfile::default()),
            score: ScoreOptions {
                semantics: NgramSemantics::Set,
                allow_long_ngrams: false,
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct ValidateArgs {
    pub samples: PathBuf,
    pub generations: Option<PathBuf>,
    pub models: Option<PathBuf>,
    /// Writes a seeded uniform subsample of `k` valid samples.
    pub subsample: Option<(usize, u64)>,
}

#[derive(Clone, Debug)]
pub struct ScoreArgs {
    pub samples: PathBuf,
    pub generations: PathBuf,
    pub models: Option<PathBuf>,
    /// Output directory of a prior `perturb` run whose `generations/`
    /// folder holds one generation file per variant.
    pub perturbed: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct OverlapArgs {
    pub scores: PathBuf,
    pub models: PathBuf,
    pub order: FamilyOrder,
    pub rate_base: RateBase,
}

#[derive(Clone, Debug)]
pub struct CharacteristicsArgs {
    pub samples: PathBuf,
    pub frequencies: PathBuf,
    pub corpus: Option<(PathBuf, CorpusFormat)>,
    pub repetitions: Option<PathBuf>,
    pub prompt_logprobs: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub entropy_scope: EntropyScope,
    pub bins: usize,
    pub binning: Binning,
}

#[derive(Clone, Debug)]
pub struct PerturbArgs {
    pub samples: PathBuf,
    pub spec: SweepConfig,
    pub frequencies: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct ReportArgs {
    pub results: PathBuf,
    pub order: FamilyOrder,
    pub rate_base: RateBase,
    pub bins: usize,
    pub binning: Binning,
    pub efficiency_ns: Vec<usize>,
}

#[derive(Clone, Debug)]
pub enum Command {
    Validate(ValidateArgs),
    Score(ScoreArgs),
    Overlap(OverlapArgs),
    Characteristics(CharacteristicsArgs),
    Perturb(PerturbArgs),
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Score(_) => "score",
            Command::Overlap(_) => "overlap",
            Command::Characteristics(_) => "characteristics",
            Command::Perturb(_) => "perturb",
            Command::Report(_) => "report",
        }
    }

    fn input_paths(&self) -> Vec<&Path> {
        let mut paths: Vec<&Path> = Vec::new();
        match self {
            Command::Validate(a) => {
                paths.push(&a.samples);
                paths.extend(a.generations.as_deref());
                paths.extend(a.models.as_deref());
            }
            Command::Score(a) => {
                paths.extend([a.samples.as_path(), a.generations.as_path()]);
                paths.extend(a.models.as_deref());
                paths.extend(a.perturbed.as_deref());
            }
            Command::Overlap(a) => paths.extend([a.scores.as_path(), a.models.as_path()]),
            Command::Characteristics(a) => {
                paths.extend([a.samples.as_path(), a.frequencies.as_path()]);
                paths.extend(a.corpus.as_ref().map(|(p, _)| p.as_path()));
                paths.extend(a.repetitions.as_deref());
                paths.extend(a.prompt_logprobs.as_deref());
                paths.extend(a.scores.as_deref());
            }
            Command::Perturb(a) => {
                paths.push(&a.samples);
                paths.extend(a.frequencies.as_deref());
            }
            Command::Report(a) => paths.push(&a.results),
        }
        paths
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub common: CommonOptions,
    pub command: Command,
}

impl RunConfig {
    pub fn new(common: CommonOptions, command: Command) -> Self {
        RunConfig { common, command }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.common;
        if c.ns.is_empty() {
            return Err(Error::invalid("n list is empty"));
        }
        if let Some(&bad) = c.ns.iter().find(|&&n| n == 0) {
            return Err(Error::invalid(format!("n = {bad} must be at least 1")));
        }
        if !(0.0..=1.0).contains(&c.threshold) {
            return Err(Error::invalid(format!("threshold {} outside [0, 1]", c.threshold)));
        }
        for p in self.command.input_paths() {
            if !p.exists() {
                return Err(Error::MissingArtifact(p.to_path_buf()));
            }
        }
        match &self.command {
            Command::Characteristics(a) if a.bins == 0 => Err(Error::invalid("bin count must be at least 1")),
            Command::Report(a) if a.bins == 0 => Err(Error::invalid("bin count must be at least 1")),
            Command::Perturb(a) => a.spec.validate(),
            _ => Ok(()),
        }
    }
}

/// What a run produced.
#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// Records or lines skipped in lenient mode.
    pub skipped: Vec<SkipEntry>,
    /// Violations found by `validate`.
    pub violations: usize,
}

impl RunOutcome {
    pub fn success(&self) -> bool {
        self.violations == 0
    }

    fn wrote(&mut self, path: PathBuf) {
        self.files.push(path);
    }
}

pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let common = &config.common;
    std::fs::create_dir_all(&common.out_dir).map_err(|e| Error::io(&common.out_dir, e))?;
    let mut outcome = match &config.command {
        Command::Validate(a) => ingest::validate_command(common, a)?,
        Command::Score(a) => scoring::score_command(common, a)?,
        Command::Overlap(a) => dynamics::overlap_command(common, a)?,
        Command::Characteristics(a) => profile::characteristics_command(common, a)?,
        Command::Perturb(a) => sweep::perturb_command(common, a)?,
        Command::Report(a) => report::report_command(common, a)?,
    };
    let log = common.out_dir.join(SKIP_LOG);
    crate::io::write_lines(&log, outcome.skipped.iter().map(SkipEntry::render))?;
    outcome.wrote(log);
    Ok(outcome)
}

/// Parses `high`/`low`.
pub fn parse_pool(s: &str) -> Result<FrequencyPool> {
    match s {
        "high" => Ok(FrequencyPool::High),
        "low" => Ok(FrequencyPool::Low),
        other => Err(Error::invalid(format!("unknown pool `{other}`"))),
    }
}
