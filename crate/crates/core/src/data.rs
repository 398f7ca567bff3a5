//! Corpus loading.
//!
//! M4 layout: one row per series, the first cell is the id and the rest are
//! values in time order, shorter rows padded with empty cells. A header row
//! (`"V1","V2",...`) is optional. The train and test files must list the same
//! ids in the same order. Generic files hold one numeric column with an
//! optional header line. Both accept LF or CRLF line ends and quoted cells.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{Frequency, TimeSeries};

/// A series with its held-out future.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub series: TimeSeries,
    pub future: Vec<f64>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn parse_cell(cell: &str, row: usize, column: usize) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| Error::Parse {
        row,
        column,
        message: format!("'{cell}' is not a number"),
    })
}

fn is_header(record: &csv::StringRecord) -> bool {
    record.len() > 1 && record.iter().skip(1).all(|c| c.parse::<f64>().is_err())
}

/// Rows of `(id, values)` with trailing empty cells dropped. Row and column
/// numbers in errors are 1-based file positions.
fn read_rows<R: Read>(input: R) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rows = Vec::new();
    for (i, record) in reader(input).records().enumerate() {
        let record = record?;
        if i == 0 && is_header(&record) {
            continue;
        }
        let cells: Vec<&str> = record.iter().collect();
        let end = cells.iter().rposition(|c| !c.is_empty()).map_or(0, |p| p + 1);
        if end == 0 {
            continue;
        }
        let id = cells[0].to_string();
        let values = cells[1..end]
            .iter()
            .enumerate()
            .map(|(j, c)| parse_cell(c, i + 1, j + 2))
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, values));
    }
    Ok(rows)
}

pub fn read_m4<R: Read, S: Read>(train: R, test: S, frequency: Frequency) -> Result<Vec<CorpusEntry>> {
    let train = read_rows(train)?;
    let test = read_rows(test)?;
    if train.len() != test.len() {
        return Err(Error::Ingest(format!(
            "{} training rows but {} test rows",
            train.len(),
            test.len()
        )));
    }
    let period = frequency.seasonal_period().unwrap_or(1);
    let horizon = frequency.m4_horizon();
    train
        .into_iter()
        .zip(test)
        .map(|((id, values), (test_id, future))| {
            if id != test_id {
                return Err(Error::Ingest(format!("train id '{id}' paired with test id '{test_id}'")));
            }
            if let Some(h) = horizon {
                if future.len() != h {
                    return Err(Error::Ingest(format!(
                        "series '{id}': test length {} but the {frequency} horizon is {h}",
                        future.len()
                    )));
                }
            }
            let series = TimeSeries::with_seasonal_period(id, values, frequency, period)
                .map_err(|e| Error::Ingest(e.to_string()))?;
            Ok(CorpusEntry { series, future })
        })
        .collect()
}

pub fn load_m4_corpus(train_path: &Path, test_path: &Path, frequency: Frequency) -> Result<Vec<CorpusEntry>> {
    read_m4(open(train_path)?, open(test_path)?, frequency)
}

/// Writes a corpus back in M4 layout; values use shortest round-trip
/// formatting so reloading reproduces them exactly.
pub fn write_m4<W: Write, V: Write>(entries: &[CorpusEntry], train: W, test: V) -> Result<()> {
    fn write<W: Write>(out: W, rows: Vec<(&str, &[f64])>) -> Result<()> {
        let width = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record((1..=width + 1).map(|i| format!("V{i}")))?;
        for (id, values) in rows {
            let mut rec = vec![id.to_string()];
            rec.extend(values.iter().map(|v| v.to_string()));
            rec.resize(width + 1, String::new());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
    write(train, entries.iter().map(|e| (e.series.id(), e.series.values())).collect())?;
    write(test, entries.iter().map(|e| (e.series.id(), e.future.as_slice())).collect())
}

pub fn read_generic<R: Read>(
    input: R,
    id: &str,
    frequency: Frequency,
    seasonal_period_override: Option<usize>,
) -> Result<TimeSeries> {
    let mut values = Vec::new();
    for (i, record) in reader(input).records().enumerate() {
        let record = record?;
        let cells: Vec<&str> = record.iter().filter(|c| !c.is_empty()).collect();
        match cells.as_slice() {
            [] => continue,
            [cell] => match cell.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) if i == 0 => continue,
                Err(_) => return Err(parse_cell(cell, i + 1, 1).unwrap_err()),
            },
            _ => {
                return Err(Error::Parse {
                    row: i + 1,
                    column: 2,
                    message: "expected a single column".into(),
                })
            }
        }
    }
    if values.is_empty() {
        return Err(Error::Ingest(format!("'{id}' contains no values")));
    }
    let period = seasonal_period_override
        .or(frequency.seasonal_period())
        .unwrap_or(1);
    TimeSeries::with_seasonal_period(id, values, frequency, period)
        .map_err(|e| Error::Ingest(e.to_string()))
}

pub fn load_generic_csv(
    path: &Path,
    frequency: Frequency,
    seasonal_period_override: Option<usize>,
) -> Result<TimeSeries> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into());
    read_generic(open(path)?, &id, frequency, seasonal_period_override)
}

/// Number of series kept from a subset of `n`: `f·n` rounded half up.
pub fn sample_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 + 0.5).floor() as usize).min(n)
}

/// Samples the same fraction from each frequency subset, keeping the
/// original order. Deterministic in `seed`.
pub fn sample_corpus(corpus: &[CorpusEntry], fraction: f64, seed: u64) -> Result<Vec<CorpusEntry>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("sample fraction {fraction} outside (0, 1]")));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in corpus.iter().enumerate() {
        groups.entry(e.series.frequency().as_str()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for members in groups.values() {
        let k = sample_size(members.len(), fraction);
        keep.extend(index::sample(&mut rng, members.len(), k).into_iter().map(|j| members[j]));
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| corpus[i].clone()).collect())
}
