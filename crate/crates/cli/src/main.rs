// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use memdyn_core::characteristics::{Binning, EntropyScope};
use memdyn_core::io::{CorpusFormat, IngestMode};
use memdyn_core::ngram::NgramSemantics;
use memdyn_core::overlap::RateBase;
use memdyn_core::perturbation::{
    DeleteTarget, FrequencyPool, PerturbScope, PerturbationKind, DEFAULT_ALPHA, DEFAULT_POOL_SIZE,
};
use memdyn_core::pipeline::{
    self, CharacteristicsArgs, Command, CommonOptions, OverlapArgs, PerturbArgs, ReportArgs, RunConfig, ScoreArgs,
    SweepConfig, SweepEntry, ValidateArgs, DEFAULT_BINS, DEFAULT_EFFICIENCY_NS, DEFAULT_NS,
};
use memdyn_core::FamilyOrder;

#[derive(Parser, Debug)]
#[command(
    name = "memdyn",
    version,
    about = "Memorization dynamics analysis over token-id records"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug)]
struct GlobalOpts {
    /// Output directory.
    #[arg(long, global = true, env = "MEMDYN_OUT_DIR", default_value = "memdyn-out")]
    out_dir: PathBuf,
    /// N-gram sizes, comma separated.
    #[arg(long = "n", global = true, value_delimiter = ',', default_values_t = DEFAULT_NS.to_vec())]
    ns: Vec<usize>,
    #[arg(long, global = true, default_value_t = 0.5)]
    threshold: f64,
    /// Abort on the first schema violation instead of skipping the record.
    #[arg(long, global = true)]
    strict: bool,
    /// Accept prefixes and continuations of any length.
    #[arg(long, global = true)]
    any_length: bool,
    /// Count repeated n-grams instead of distinct ones.
    #[arg(long, global = true)]
    multiset: bool,
    /// Allow n above 32.
    #[arg(long, global = true)]
    allow_long_ngrams: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Check sample, generation and model files against the record schemas.
    Validate {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        generations: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Also write a uniform subsample of this many valid samples.
        #[arg(long)]
        subsample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score generations against true continuations.
    Score {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        generations: PathBuf,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Directory written by `perturb`, with generations/<variant>.jsonl filled in.
        #[arg(long)]
        perturbed: Option<PathBuf>,
    },
    /// Overlap, newly memorized/forgotten and first-memorized tables.
    Overlap {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long, value_enum, default_value_t = OrderBy::Scale)]
        order_by: OrderBy,
        #[arg(long, value_enum, default_value_t = RateBaseArg::Universe)]
        rate_base: RateBaseArg,
    },
    /// Per-sample data characteristics and binned curves.
    Characteristics {
        #[arg(long)]
        samples: PathBuf,
        /// Token frequency table (TSV: token_id, count).
        #[arg(long)]
        frequencies: PathBuf,
        /// Training corpus to count sample repetitions in.
        #[arg(long, conflicts_with = "repetitions")]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, requires = "corpus")]
        corpus_format: Option<CorpusFormatArg>,
        /// Precomputed repetition counts (CSV: sample_id, repetitions).
        #[arg(long)]
        repetitions: Option<PathBuf>,
        /// Generation records carrying prefix logprobs under a scoring model.
        #[arg(long)]
        prompt_logprobs: Option<PathBuf>,
        /// scores.csv from `score`; enables the binned curves.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = EntropyScopeArg::Continuation)]
        entropy_scope: EntropyScopeArg,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long, value_enum, default_value_t = BinningArg::EqualWidth)]
        binning: BinningArg,
    },
    /// Write perturbed sample sets and their intensity table.
    Perturb(PerturbCli),
    /// Figure tables from a results directory.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum, default_value_t = OrderBy::Scale)]
        order_by: OrderBy,
        #[arg(long, value_enum, default_value_t = RateBaseArg::Universe)]
        rate_base: RateBaseArg,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long, value_enum, default_value_t = BinningArg::EqualWidth)]
        binning: BinningArg,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_EFFICIENCY_NS.to_vec())]
        efficiency_n: Vec<usize>,
    },
}

#[derive(Args, Debug)]
struct PerturbCli {
    #[arg(long)]
    samples: PathBuf,
    /// Token frequency table; required for edit perturbations.
    #[arg(long)]
    frequencies: Option<PathBuf>,
    /// TOML sweep file. Flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "spec")]
    kind: Option<KindArg>,
    /// Shuffle ratios or edit counts, comma separated.
    #[arg(long, value_delimiter = ',', requires = "kind")]
    strengths: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pool: Vec<PoolArg>,
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    scope: Option<ScopeArg>,
    #[arg(long, value_enum)]
    delete_target: Option<DeleteTargetArg>,
    #[arg(long)]
    pool_size: Option<usize>,
}

macro_rules! value_enum {
    ($name:ident => $target:ty { $($variant:ident => $mapped:expr),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
        enum $name { $($variant),+ }

        impl From<$name> for $target {
            fn from(v: $name) -> Self {
                match v { $($name::$variant => $mapped),+ }
            }
        }
    };
}

value_enum!(OrderBy => FamilyOrder { Scale => FamilyOrder::Scale, Step => FamilyOrder::Step });
value_enum!(RateBaseArg => RateBase {
    Universe => RateBase::Universe,
    CurrentMemorized => RateBase::CurrentMemorized,
});
value_enum!(BinningArg => Binning { EqualWidth => Binning::EqualWidth, EqualCount => Binning::EqualCount });
value_enum!(EntropyScopeArg => EntropyScope {
    Prefix => EntropyScope::Prefix,
    Continuation => EntropyScope::Continuation,
    Full => EntropyScope::Full,
});
value_enum!(CorpusFormatArg => CorpusFormat {
    U16 => CorpusFormat::U16,
    U32 => CorpusFormat::U32,
    Jsonl => CorpusFormat::Jsonl,
});
value_enum!(KindArg => PerturbationKind {
    Shuffle => PerturbationKind::Shuffle,
    Delete => PerturbationKind::Delete,
    Insert => PerturbationKind::Insert,
    Replace => PerturbationKind::Replace,
});
value_enum!(PoolArg => FrequencyPool { High => FrequencyPool::High, Low => FrequencyPool::Low });
value_enum!(ScopeArg => PerturbScope { Prefix => PerturbScope::Prefix, Full => PerturbScope::Full });
value_enum!(DeleteTargetArg => DeleteTarget { Pool => DeleteTarget::Pool, Any => DeleteTarget::Any });

fn sweep_config(p: &PerturbCli) -> anyhow::Result<SweepConfig> {
    let mut cfg = match &p.spec {
        Some(path) => SweepConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => SweepConfig {
            seeds: vec![0],
            alpha: DEFAULT_ALPHA,
            scope: PerturbScope::default(),
            delete_target: DeleteTarget::default(),
            pool_size: DEFAULT_POOL_SIZE,
            sweeps: Vec::new(),
        },
    };
    if let Some(kind) = p.kind {
        if p.strengths.is_empty() {
            bail!("--kind needs --strengths");
        }
        let pools = if p.pool.is_empty() {
            vec![FrequencyPool::High, FrequencyPool::Low]
        } else {
            p.pool.iter().map(|&x| x.into()).collect()
        };
        cfg.sweeps = vec![SweepEntry {
            kind: kind.into(),
            strengths: p.strengths.clone(),
            pools,
        }];
    } else if !p.pool.is_empty() {
        let pools: Vec<FrequencyPool> = p.pool.iter().map(|&x| x.into()).collect();
        for s in &mut cfg.sweeps {
            s.pools = pools.clone();
        }
    }
    if !p.seed.is_empty() {
        cfg.seeds = p.seed.clone();
    }
    if let Some(a) = p.alpha {
        cfg.alpha = a;
    }
    if let Some(s) = p.scope {
        cfg.scope = s.into();
    }
    if let Some(t) = p.delete_target {
        cfg.delete_target = t.into();
    }
    if let Some(k) = p.pool_size {
        cfg.pool_size = k;
    }
    Ok(cfg)
}

fn build_config(cli: Cli) -> anyhow::Result<RunConfig> {
    let g = cli.global;
    let mut common = CommonOptions::new(g.out_dir);
    common.ns = g.ns;
    common.threshold = g.threshold;
    common.ingest = if g.strict {
        IngestMode::Strict
    } else {
        IngestMode::Lenient
    };
    if g.any_length {
        common.lengths = None;
    }
    if g.multiset {
        common.score.semantics = NgramSemantics::Multiset;
    }
    common.score.allow_long_ngrams = g.allow_long_ngrams;

    let command = match cli.command {
        Cmd::Validate {
            samples,
            generations,
            models,
            subsample,
            seed,
        } => Command::Validate(ValidateArgs {
            samples,
            generations,
            models,
            subsample: subsample.map(|k| (k, seed)),
        }),
        Cmd::Score {
            samples,
            generations,
            models,
            perturbed,
        } => Command::Score(ScoreArgs {
            samples,
            generations,
            models,
            perturbed,
        }),
        Cmd::Overlap {
            scores,
            models,
            order_by,
            rate_base,
        } => Command::Overlap(OverlapArgs {
            scores,
            models,
            order: order_by.into(),
            rate_base: rate_base.into(),
        }),
        Cmd::Characteristics {
            samples,
            frequencies,
            corpus,
            corpus_format,
            repetitions,
            prompt_logprobs,
            scores,
            entropy_scope,
            bins,
            binning,
        } => Command::Characteristics(CharacteristicsArgs {
            samples,
            frequencies,
            corpus: corpus.map(|p| {
                let fmt = corpus_format.map_or_else(|| CorpusFormat::from_path(&p), Into::into);
                (p, fmt)
            }),
            repetitions,
            prompt_logprobs,
            scores,
            entropy_scope: entropy_scope.into(),
            bins,
            binning: binning.into(),
        }),
        Cmd::Perturb(p) => Command::Perturb(PerturbArgs {
            spec: sweep_config(&p)?,
            samples: p.samples,
            frequencies: p.frequencies,
        }),
        Cmd::Report {
            results,
            order_by,
            rate_base,
            bins,
            binning,
            efficiency_n,
        } => Command::Report(ReportArgs {
            results,
            order: order_by.into(),
            rate_base: rate_base.into(),
            bins,
            binning: binning.into(),
            efficiency_ns: efficiency_n,
        }),
    };
    Ok(RunConfig::new(common, command))
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let config = build_config(cli)?;
    let name = config.command.name();
    let outcome = pipeline::run(&config).with_context(|| format!("{name} failed"))?;
    for f in &outcome.files {
        info!("wrote {}", f.display());
    }
    if !outcome.skipped.is_empty() {
        warn!(
            "{} record(s) skipped, see {}",
            outcome.skipped.len(),
            config.common.out_dir.join(pipeline::SKIP_LOG).display()
        );
    }
    if !outcome.success() {
        eprintln!("{name}: {} violation(s)", outcome.violations);
    }
    Ok(outcome.success())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
