// SPDX-License-Identifier: Apache-2.0

//! File formats: line-delimited JSON records, tab-separated frequency
//! tables, CSV model metadata and result tables, and corpus token streams.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::characteristics::RepetitionCounter;
use crate::error::{Error, Result};
use crate::types::{FrequencyTable, ModelMeta, TokenId};

/// Whether malformed input lines abort ingestion or are skipped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum IngestMode {
    #[default]
    Lenient,
    Strict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SkipEntry {
    pub source: String,
    /// One-based line number; 0 when the entry is not tied to a line.
    pub line: usize,
    pub reason: String,
}

impl SkipEntry {
    pub fn new(source: impl Into<String>, line: usize, reason: impl Into<String>) -> Self {
        SkipEntry {
            source: source.into(),
            line,
            reason: reason.into(),
        }
    }

    pub fn render(&self) -> String {
        format!("{}:{}: {}", self.source, self.line, self.reason)
    }
}

#[derive(Clone, Debug)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    /// One-based source line of each record.
    pub lines: Vec<usize>,
    pub skipped: Vec<SkipEntry>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, mode: IngestMode) -> Result<Loaded<T>> {
    let reader = BufReader::new(open(path)?);
    let source = path.display().to_string();
    let mut loaded = Loaded {
        records: Vec::new(),
        lines: Vec::new(),
        skipped: Vec::new(),
    };
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(rec) => {
                loaded.records.push(rec);
                loaded.lines.push(line_no);
            }
            Err(e) if mode == IngestMode::Lenient => {
                loaded.skipped.push(SkipEntry::new(&source, line_no, e.to_string()));
            }
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(loaded)
}

pub fn write_jsonl<'a, T, I>(path: &Path, records: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut w = create(path)?;
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `token_id<TAB>count` lines. Blank lines and `#` comments are ignored.
pub fn read_frequency_table(path: &Path) -> Result<FrequencyTable> {
    let reader = BufReader::new(open(path)?);
    let mut table = FrequencyTable::new();
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split('\t');
        let (Some(tok), Some(count), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(i + 1, "expected two tab-separated columns".into()));
        };
        let tok: TokenId = tok
            .trim()
            .parse()
            .map_err(|e| parse_err(i + 1, format!("token id `{tok}`: {e}")))?;
        let count: u64 = count
            .trim()
            .parse()
            .map_err(|e| parse_err(i + 1, format!("count `{count}`: {e}")))?;
        if table.insert(tok, count).is_some() {
            return Err(parse_err(i + 1, format!("duplicate token id {tok}")));
        }
    }
    Ok(table)
}

pub fn write_frequency_table(path: &Path, table: &FrequencyTable) -> Result<()> {
    let mut w = create(path)?;
    for (tok, count) in table.iter() {
        writeln!(w, "{tok}\t{count}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn write_csv<'a, T, I>(path: &Path, rows: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a CSV with an explicit header, for tables whose rows may be empty.
pub fn write_csv_records<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Model metadata: CSV with columns `model_id,param_count,training_step,scale_rank`.
pub fn read_models(path: &Path) -> Result<Vec<ModelMeta>> {
    read_csv(path)
}

pub fn write_models(path: &Path, models: &[ModelMeta]) -> Result<()> {
    write_csv(path, models)
}

/// Precomputed repetition counts: CSV with columns `sample_id,repetitions`.
pub fn read_repetitions(path: &Path) -> Result<BTreeMap<String, u64>> {
    #[derive(Deserialize)]
    struct Row {
        sample_id: String,
        repetitions: u64,
    }
    Ok(read_csv::<Row>(path)?
        .into_iter()
        .map(|r| (r.sample_id, r.repetitions))
        .collect())
}

pub fn write_lines<I, S>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut w = create(path)?;
    for line in lines {
        writeln!(w, "{}", line.as_ref()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Encoding of a corpus token stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// Flat little-endian `u16` tokens, one continuous stream.
    U16,
    /// Flat little-endian `u32` tokens, one continuous stream.
    U32,
    /// One JSON array of token ids per line; each line is a separate document.
    Jsonl,
}

impl CorpusFormat {
    /// `.jsonl`/`.json` map to [`CorpusFormat::Jsonl`], `.u16`/`.bin16` to
    /// [`CorpusFormat::U16`], anything else to [`CorpusFormat::U32`].
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json") => CorpusFormat::Jsonl,
            Some("u16" | "bin16") => CorpusFormat::U16,
            _ => CorpusFormat::U32,
        }
    }
}

const SCAN_CHUNK: usize = 1 << 20;

/// Streams a corpus file through `counter` without loading it whole.
/// Returns the number of tokens scanned.
pub fn scan_corpus(path: &Path, format: CorpusFormat, counter: &mut RepetitionCounter) -> Result<u64> {
    let mut reader = BufReader::new(open(path)?);
    let mut scanned = 0u64;
    match format {
        CorpusFormat::Jsonl => {
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let doc: Vec<TokenId> = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                scanned += doc.len() as u64;
                counter.extend(doc);
                counter.end_document();
            }
        }
        CorpusFormat::U16 | CorpusFormat::U32 => {
            let width = if format == CorpusFormat::U16 { 2 } else { 4 };
            let mut buf = vec![0u8; SCAN_CHUNK * width];
            let mut carry = 0usize;
            loop {
                let read = reader.read(&mut buf[carry..]).map_err(|e| Error::io(path, e))?;
                if read == 0 {
                    if carry != 0 {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            line: 0,
                            reason: format!("trailing {carry} bytes do not form a token"),
                        });
                    }
                    break;
                }
                let filled = carry + read;
                let whole = filled - filled % width;
                for chunk in buf[..whole].chunks_exact(width) {
                    let tok = if width == 2 {
                        TokenId::from(u16::from_le_bytes([chunk[0], chunk[1]]))
                    } else {
                        u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]])
                    };
                    counter.push(tok);
                }
                scanned += (whole / width) as u64;
                buf.copy_within(whole..filled, 0);
                carry = filled - whole;
            }
        }
    }
    Ok(scanned)
}

/// Encodes tokens as a flat little-endian corpus file.
pub fn write_corpus(path: &Path, format: CorpusFormat, tokens: &[TokenId]) -> Result<()> {
    let mut w = create(path)?;
    let res = match format {
        CorpusFormat::U16 => tokens.iter().try_for_each(|&t| {
            let t = u16::try_from(t)
                .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("token {t} exceeds u16")))?;
            w.write_all(&t.to_le_bytes())
        }),
        CorpusFormat::U32 => tokens.iter().try_for_each(|t| w.write_all(&t.to_le_bytes())),
        CorpusFormat::Jsonl => {
            serde_json::to_writer(&mut w, tokens)?;
            w.write_all(b"\n")
        }
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn ensure_exists(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}
