//! Streaming jsonlines ingestion and emission.
//!
//! One JSON object per line, UTF-8, `\n` terminated. Field names follow the
//! common convention: `start`, `target`, `item_id`, `feat_dynamic_real`,
//! `feat_static_cat`. Missing target values are encoded as JSON `null`.
//! Reading is lazy; memory use is independent of file size.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{format_timestamp, parse_timestamp, Dataset, Frequency, TimeSeriesRecord};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct RawRecord {
    start: Option<String>,
    target: Option<Vec<Option<f64>>>,
    item_id: Option<String>,
    #[serde(default)]
    feat_dynamic_real: Vec<Vec<f64>>,
    #[serde(default)]
    feat_static_cat: Vec<u64>,
    freq: Option<String>,
}

#[derive(Debug, Serialize)]
struct RawRecordOut<'a> {
    start: String,
    target: &'a [Option<f64>],
    item_id: &'a str,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    feat_dynamic_real: &'a [Vec<f64>],
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    feat_static_cat: &'a [u64],
    freq: String,
}

fn record_from_raw(raw: RawRecord, default_freq: Frequency, line: usize) -> Result<TimeSeriesRecord> {
    let start_str = raw
        .start
        .ok_or_else(|| Error::Schema { line, message: "missing required field 'start'".to_string() })?;
    let target = raw
        .target
        .ok_or_else(|| Error::Schema { line, message: "missing required field 'target'".to_string() })?;
    let start = parse_timestamp(&start_str).map_err(|e| Error::Schema { line, message: e.to_string() })?;
    let freq = match raw.freq {
        Some(token) => Frequency::parse(&token).map_err(|e| Error::Schema { line, message: e.to_string() })?,
        None => default_freq,
    };
    let item_id = raw.item_id.unwrap_or_else(|| (line - 1).to_string());
    let mut record = TimeSeriesRecord::new(item_id, start, freq, target, raw.feat_dynamic_real, raw.feat_static_cat)
        .map_err(|e| Error::Schema { line, message: e.to_string() })?;
    record.align_start();
    Ok(record)
}

/// Lazily read records from a jsonlines file. Lines without a `freq` field
/// use `default_freq`. Errors carry the 1-based line number; iteration can
/// continue past valid records up to the first bad line.
pub fn read_jsonlines(
    path: impl AsRef<Path>,
    default_freq: Frequency,
) -> Result<impl Iterator<Item = Result<TimeSeriesRecord>> + Send> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_jsonlines_from(BufReader::new(file), default_freq, path.to_path_buf()))
}

/// Reader-based variant of [`read_jsonlines`], useful for tests and pipes.
pub fn read_jsonlines_from<R: BufRead + Send>(
    reader: R,
    default_freq: Frequency,
    path: PathBuf,
) -> impl Iterator<Item = Result<TimeSeriesRecord>> + Send {
    reader.lines().enumerate().filter_map(move |(idx, line)| {
        let line_no = idx + 1;
        let text = match line {
            Ok(text) => text,
            Err(e) => return Some(Err(Error::io(path.clone(), e))),
        };
        if text.trim().is_empty() {
            return None;
        }
        let raw: RawRecord = match serde_json::from_str(&text) {
            Ok(raw) => raw,
            Err(e) => return Some(Err(Error::MalformedLine { line: line_no, message: e.to_string() })),
        };
        Some(record_from_raw(raw, default_freq, line_no))
    })
}

/// Write records as jsonlines; returns the number of records written.
/// Round-trips exactly with [`read_jsonlines`] (the `freq` field is always
/// emitted so the reader's default never matters on files we produced).
pub fn write_jsonlines<I>(records: I, path: impl AsRef<Path>) -> Result<usize>
where
    I: IntoIterator<Item = Result<TimeSeriesRecord>>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    let mut count = 0usize;
    for record in records {
        let record = record?;
        let raw = RawRecordOut {
            start: format_timestamp(record.start),
            target: &record.target,
            item_id: &record.item_id,
            feat_dynamic_real: &record.feat_dynamic_real,
            feat_static_cat: &record.feat_static_cat,
            freq: record.freq.to_token(),
        };
        serde_json::to_writer(&mut writer, &raw).map_err(|e| Error::io(path, e.into()))?;
        writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        count += 1;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(count)
}

/// A jsonlines file as a re-iterable [`Dataset`].
#[derive(Debug, Clone)]
pub struct JsonlDataset {
    pub path: PathBuf,
    pub default_freq: Frequency,
}

impl JsonlDataset {
    pub fn new(path: impl Into<PathBuf>, default_freq: Frequency) -> Self {
        JsonlDataset { path: path.into(), default_freq }
    }
}

impl Dataset for JsonlDataset {
    fn iter(&self) -> Result<Box<dyn Iterator<Item = Result<TimeSeriesRecord>> + Send + '_>> {
        Ok(Box::new(read_jsonlines(&self.path, self.default_freq)?))
    }
}
