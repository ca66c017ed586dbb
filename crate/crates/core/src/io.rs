//! Dataset ingestion and emission.
//!
//! JSONL is the primary format, one record per line:
//! `{"id": str, "logits": [f64; K], "label": int,
//!   "entropy_profile": [f64; L]?, "alpha": [[[f64; N]; T_l]; L]?}`.
//! CSV covers the no-alpha case with columns
//! `id,label,logit_0..logit_{K-1},h_0..h_{L-1}`.
//!
//! Parse errors carry the 1-based line number of the offending record.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::data::{Dataset, PredictionRecord};
use crate::error::{Error, Result};

fn at_line(line: usize, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Parse JSONL from a reader. Every record is validated; the first violation
/// aborts with its line number.
pub fn read_jsonl(reader: impl BufRead) -> Result<Dataset> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| at_line(lineno, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| at_line(lineno, e))?;
        record.validate().map_err(|e| at_line(lineno, e))?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::invalid("no records in input"));
    }
    Dataset::new(records)
}

pub fn read_jsonl_path(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_jsonl(std::io::BufReader::new(file))
}

/// Write a dataset as JSONL. `read_jsonl(write_jsonl(ds))` is the identity
/// up to recomputed entropy profiles (which `Dataset::new` already fixed).
pub fn write_jsonl(dataset: &Dataset, mut writer: impl Write) -> Result<()> {
    for record in dataset.records() {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_jsonl_path(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_jsonl(dataset, std::io::BufWriter::new(file))
}

/// Parse the CSV layout. Header row is required; `h_*` columns are optional
/// but must be contiguous and trailing.
pub fn read_csv(reader: impl std::io::Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 || cols[0] != "id" || cols[1] != "label" {
        return Err(Error::invalid(
            "csv header must start with id,label,logit_0..",
        ));
    }
    let k = cols.iter().filter(|c| c.starts_with("logit_")).count();
    let l = cols.iter().filter(|c| c.starts_with("h_")).count();
    let expected: Vec<String> = ["id".to_string(), "label".to_string()]
        .into_iter()
        .chain((0..k).map(|i| format!("logit_{i}")))
        .chain((0..l).map(|i| format!("h_{i}")))
        .collect();
    if cols != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::invalid(format!(
            "csv header mismatch; expected {}",
            expected.join(",")
        )));
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let lineno = i + 2; // header is line 1
        let row = row.map_err(|e| at_line(lineno, e))?;
        let id = row.get(0).unwrap_or_default().to_string();
        let label: usize = row
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|e| at_line(lineno, format!("label: {e}")))?;
        let parse_f64 = |idx: usize, what: &str| -> Result<f64> {
            row.get(idx)
                .ok_or_else(|| at_line(lineno, format!("missing {what}")))?
                .parse::<f64>()
                .map_err(|e| at_line(lineno, format!("{what}: {e}")))
        };
        let logits = (0..k)
            .map(|j| parse_f64(2 + j, &format!("logit_{j}")))
            .collect::<Result<Vec<f64>>>()?;
        let mut record = PredictionRecord::new(id, logits, label);
        if l > 0 {
            let h = (0..l)
                .map(|j| parse_f64(2 + k + j, &format!("h_{j}")))
                .collect::<Result<Vec<f64>>>()?;
            record.entropy_profile = Some(h);
        }
        record.validate().map_err(|e| at_line(lineno, e))?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::invalid("no records in input"));
    }
    Dataset::new(records)
}

pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}

/// Dispatch on file extension: `.csv` goes to the CSV reader, anything else
/// is treated as JSONL.
pub fn read_auto(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_csv_path(path),
        _ => read_jsonl_path(path),
    }
}
