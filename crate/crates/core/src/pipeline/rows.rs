// SPDX-License-Identifier: Apache-2.0

//! CSV row layouts of the pipeline's per-record and aggregate outputs.

use serde::{Deserialize, Serialize};

use std::path::Path;

use crate::characteristics::CharacteristicRecord;
use crate::error::Result;
use crate::io;
use crate::perturbation::{FrequencyPool, PerturbationKind};

/// A serde row type with a known column list.
pub trait TableRow: Serialize {
    const HEADER: &'static [&'static str];
}

macro_rules! table_row {
    (
        $(#[$meta:meta])*
        pub struct $name:ident {
            $($(#[$fmeta:meta])* pub $field:ident: $ty:ty,)*
        }
    ) => {
        $(#[$meta])*
        pub struct $name {
            $($(#[$fmeta])* pub $field: $ty,)*
        }

        impl TableRow for $name {
            const HEADER: &'static [&'static str] = &[$(stringify!($field)),*];
        }
    };
}

impl TableRow for CharacteristicRecord {
    const HEADER: &'static [&'static str] = &[
        "sample_id",
        "avg_token_freq",
        "repetitions",
        "prompt_perplexity",
        "huffman_total_bits",
        "huffman_bits_per_token",
        "huffman_compression_ratio",
        "sequence_entropy_bits",
        "prefix_entropy_bits",
    ];
}

/// Writes `rows` as CSV. The header is written even when `rows` is empty,
/// which the csv writer would otherwise skip.
pub(crate) fn write_table<T: TableRow>(path: &Path, rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        io::write_csv_records(path, T::HEADER, std::iter::empty::<Vec<String>>())
    } else {
        io::write_csv(path, rows)
    }
}

table_row! {
    /// One row of `scores.csv` / `scores.jsonl`.
    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct ScoreRow {
        pub sample_id: String,
        pub model_id: String,
        pub n: usize,
        pub score: f64,
        pub memorized: bool,
        /// Perturbation seed; empty for unperturbed inputs.
        pub seed: Option<u64>,
        pub mean_uncertainty: Option<f64>,
    }
}

table_row! {
    /// One row of `perturbed_scores.csv`.
    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct PerturbedScoreRow {
        pub sample_id: String,
        pub model_id: String,
        pub n: usize,
        pub seed: u64,
        pub variant: String,
        pub kind: PerturbationKind,
        pub strength: f64,
        pub pool: Option<FrequencyPool>,
        pub score: f64,
        pub memorized: bool,
        pub original_score: f64,
        pub original_memorized: bool,
        pub score_change: f64,
        pub combined: Option<f64>,
        pub actual_ops: usize,
        pub mean_uncertainty: Option<f64>,
        pub original_mean_uncertainty: Option<f64>,
        /// Entropy in bits of the unperturbed prefix.
        pub redundancy_bits: f64,
    }
}

table_row! {
    /// One row of `intensity.csv`.
    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct IntensityRow {
        pub sample_id: String,
        pub variant: String,
        pub kind: PerturbationKind,
        pub strength: f64,
        pub pool: Option<FrequencyPool>,
        pub seed: u64,
        pub position_shift: Option<f64>,
        pub relative_ordering: Option<f64>,
        pub combined: Option<f64>,
        pub actual_ops: usize,
    }
}

table_row! {
    /// One row of the perturbation `manifest.csv`.
    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct ManifestRow {
        pub variant: String,
        pub kind: PerturbationKind,
        pub strength: f64,
        pub pool: Option<FrequencyPool>,
        pub seed: u64,
        /// Perturbed sample file, relative to the manifest.
        pub file: String,
        pub records: usize,
    }
}

table_row! {
    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct OverlapPairRow {
        pub n: usize,
        pub small_model: String,
        pub large_model: String,
        pub universe: usize,
        pub both_memorized: usize,
        pub both_unmemorized: usize,
        pub small_only: usize,
        pub large_only: usize,
        pub both_memorized_pct: f64,
        pub both_unmemorized_pct: f64,
        pub small_only_pct: f64,
        pub large_only_pct: f64,
    }
}

table_row! {
    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct NewlyRatesRow {
        pub model_id: String,
        pub n: usize,
        pub position: usize,
        pub universe: usize,
        pub memorized: usize,
        pub newly_memorized: usize,
        pub newly_forgotten: usize,
        pub newly_memorized_rate: f64,
        pub newly_forgotten_rate: f64,
    }
}

table_row! {
    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct FirstMemorizedRow {
        pub sample_id: String,
        pub n: usize,
        pub first_position: Option<usize>,
        pub first_model_id: Option<String>,
    }
}

table_row! {
    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct CharacteristicCurveRow {
        pub model_id: String,
        pub n: usize,
        pub characteristic: String,
        pub group: String,
        pub bin_center: f64,
        pub mean_score: f64,
        pub count: usize,
    }
}

table_row! {
    /// One row of `counts_by_scale.csv` and `rate_by_checkpoint.csv`.
    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct MemorizationCountRow {
        pub model_id: String,
        pub scale_rank: u32,
        pub training_step: u64,
        pub param_count: u64,
        pub n: usize,
        pub memorized_count: usize,
        pub total: usize,
        pub rate: f64,
    }
}

table_row! {
    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct EfficiencyRow {
        pub model_id: String,
        pub scale_rank: u32,
        pub param_count: u64,
        pub n: usize,
        pub memorized_count: usize,
        pub efficiency: f64,
    }
}

table_row! {
    /// One row of `perturbation_response.csv`.
    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct PerturbationResponseRow {
        pub kind: PerturbationKind,
        pub pool: Option<FrequencyPool>,
        pub strength: f64,
        pub model_id: String,
        pub n: usize,
        pub group: String,
        pub count: usize,
        pub mean_score_change: f64,
        pub mean_uncertainty: Option<f64>,
        pub mean_original_uncertainty: Option<f64>,
        pub mean_combined: Option<f64>,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_of<T: TableRow>(row: &T) -> Vec<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(row).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        text.lines().next().unwrap().split(',').map(str::to_string).collect()
    }

    #[test]
    fn characteristic_header_matches_serde() {
        let rec = CharacteristicRecord {
            sample_id: "s".into(),
            avg_token_freq: 0.0,
            repetitions: None,
            prompt_perplexity: None,
            huffman_total_bits: 0,
            huffman_bits_per_token: 0.0,
            huffman_compression_ratio: None,
            sequence_entropy_bits: 0.0,
            prefix_entropy_bits: 0.0,
        };
        assert_eq!(header_of(&rec), CharacteristicRecord::HEADER);
    }

    #[test]
    fn empty_table_keeps_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_table::<ScoreRow>(&path, &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim_end(), ScoreRow::HEADER.join(","));
    }
}
