//! Raw CSV access shared by ingestion, profiling, the tools and the generator.
//!
//! Cells are kept as raw text. A cell is null when it is empty after trimming
//! or equals `NULL` in any letter case.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

/// Rows of one CSV file with nulls already decoded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TableData {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl TableData {
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Iterates a single column, yielding `None` for null cells.
    pub fn column(&self, idx: usize) -> impl Iterator<Item = Option<&str>> + '_ {
        self.rows
            .iter()
            .map(move |r| r.get(idx).and_then(|c| c.as_deref()))
    }
}

pub fn is_null(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("null")
}

fn decode(cell: &str) -> Option<String> {
    if is_null(cell) {
        None
    } else {
        Some(cell.to_string())
    }
}

/// Reads a CSV file with a header row. Short rows are padded with nulls and
/// long rows are truncated to the header width.
pub fn read_csv(path: &Path) -> Result<TableData, csv::Error> {
    let file = File::open(path)?;
    read_csv_from(BufReader::new(file), None)
}

/// Like [`read_csv`] but stops after `limit` data rows. Also returns the total
/// number of data rows in the file.
pub fn read_csv_limited(path: &Path, limit: usize) -> Result<(TableData, usize), csv::Error> {
    let file = File::open(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let width = headers.len();
    let mut rows = Vec::new();
    let mut total = 0usize;
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        if total < limit {
            rows.push(decode_record(&record, width));
        }
        total += 1;
    }
    Ok((TableData { headers, rows }, total))
}

fn decode_record(record: &csv::StringRecord, width: usize) -> Vec<Option<String>> {
    (0..width).map(|i| record.get(i).and_then(decode)).collect()
}

pub fn read_csv_from<R: std::io::Read>(
    reader: R,
    limit: Option<usize>,
) -> Result<TableData, csv::Error> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let width = headers.len();
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        if limit.is_some_and(|l| rows.len() >= l) {
            break;
        }
        rows.push(decode_record(&record, width));
    }
    Ok(TableData { headers, rows })
}

/// Writes a table back out. Nulls become empty cells.
pub fn write_csv(path: &Path, data: &TableData) -> Result<(), csv::Error> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let file = File::create(path)?;
    let mut wtr = csv::WriterBuilder::new().from_writer(BufWriter::new(file));
    wtr.write_record(&data.headers)?;
    for row in &data.rows {
        wtr.write_record(row.iter().map(|c| c.as_deref().unwrap_or("")))?;
    }
    let mut inner = wtr.into_inner().map_err(|e| e.into_error())?;
    inner.flush()?;
    Ok(())
}
