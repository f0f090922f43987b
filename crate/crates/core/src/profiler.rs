//! Exact column statistics: extremes, mean/median, null ratio, distinct
//! counts, top-K frequencies and equal-width histograms.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifacts::{read_jsonl, write_jsonl, JsonlError};
use crate::catalog::{parse_finite, CatalogError, CatalogStore, ColumnType, TableEntry};
use crate::table::TableData;

pub const PROFILES_FORMAT: &str = "metalake-profiles";
pub const PROFILES_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("unknown column {column} in table {table}")]
    UnknownColumn { table: String, column: String },
    #[error("column {0} is not numeric")]
    NotNumeric(String),
    #[error("profiles file: {0}")]
    Store(#[from] JsonlError),
}

#[derive(Debug, Clone, Copy)]
pub struct ProfileOptions {
    pub top_k: usize,
    pub histogram_bins: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            top_k: 10,
            histogram_bins: 10,
        }
    }
}

/// Numeric extreme for numeric columns, lexicographic one otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Extreme {
    Number(f64),
    Text(String),
}

impl Extreme {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Extreme::Number(v) => Some(*v),
            Extreme::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueCount {
    pub value: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    /// One count per bin. A single bin when `min == max`.
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Equal-width bins over `[min, max]`; the maximum lands in the last bin.
    pub fn build(values: &[f64], bins: usize) -> Option<Histogram> {
        let bins = bins.max(1);
        let (min, max) = values
            .iter()
            .fold(None, |acc: Option<(f64, f64)>, &v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })?;
        if min == max {
            return Some(Histogram {
                min,
                max,
                counts: vec![values.len() as u64],
            });
        }
        let width = (max - min) / bins as f64;
        let mut counts = vec![0u64; bins];
        for &v in values {
            let idx = (((v - min) / width).floor() as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Some(Histogram { min, max, counts })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub column: String,
    pub declared_type: ColumnType,
    pub min: Option<Extreme>,
    pub max: Option<Extreme>,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub null_count: u64,
    pub null_ratio: f64,
    pub distinct_count: u64,
    pub top_k: Vec<ValueCount>,
    pub histogram: Option<Histogram>,
}

impl ColumnProfile {
    pub fn non_null_count(&self, row_count: u64) -> u64 {
        row_count - self.null_count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableProfile {
    pub table_id: String,
    pub row_count: u64,
    pub columns: Vec<ColumnProfile>,
}

impl TableProfile {
    pub fn column(&self, name: &str) -> Option<&ColumnProfile> {
        self.columns.iter().find(|c| c.column == name)
    }
}

/// Canonical form of a numeric cell: `3`, `3.0` and `3.00` share one key.
pub fn numeric_key(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v}")
}

/// Key under which a cell is counted for distinct/top-K statistics.
pub fn value_key(ty: ColumnType, cell: &str) -> String {
    if ty.is_numeric() {
        if let Some(v) = parse_finite(cell) {
            return numeric_key(v);
        }
    }
    cell.trim().to_string()
}

fn median_of(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

/// Profiles a single column of already-loaded data.
pub fn profile_column(
    name: &str,
    ty: ColumnType,
    cells: impl Iterator<Item = Option<String>>,
    row_count: u64,
    opts: &ProfileOptions,
) -> ColumnProfile {
    let mut null_count = 0u64;
    let mut freq: HashMap<String, u64> = HashMap::new();
    let mut numbers: Vec<f64> = Vec::new();
    let mut text_min: Option<String> = None;
    let mut text_max: Option<String> = None;

    for cell in cells {
        let Some(raw) = cell else {
            null_count += 1;
            continue;
        };
        let key = value_key(ty, &raw);
        if ty.is_numeric() {
            if let Some(v) = parse_finite(&raw) {
                numbers.push(v);
            }
        } else {
            if text_min.as_ref().is_none_or(|m| key < *m) {
                text_min = Some(key.clone());
            }
            if text_max.as_ref().is_none_or(|m| key > *m) {
                text_max = Some(key.clone());
            }
        }
        *freq.entry(key).or_insert(0) += 1;
    }

    let mut top: Vec<ValueCount> = freq
        .iter()
        .map(|(value, &count)| ValueCount {
            value: value.clone(),
            count,
        })
        .collect();
    top.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.value.cmp(&b.value)));
    top.truncate(opts.top_k);

    let (min, max, mean, median, histogram) = if ty.is_numeric() {
        let mut sorted = numbers.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        let mean =
            (!numbers.is_empty()).then(|| numbers.iter().sum::<f64>() / numbers.len() as f64);
        (
            sorted.first().copied().map(Extreme::Number),
            sorted.last().copied().map(Extreme::Number),
            mean,
            median_of(&sorted),
            Histogram::build(&numbers, opts.histogram_bins),
        )
    } else {
        (
            text_min.map(Extreme::Text),
            text_max.map(Extreme::Text),
            None,
            None,
            None,
        )
    };

    ColumnProfile {
        column: name.to_string(),
        declared_type: ty,
        min,
        max,
        mean,
        median,
        null_count,
        null_ratio: if row_count == 0 {
            0.0
        } else {
            null_count as f64 / row_count as f64
        },
        distinct_count: freq.len() as u64,
        top_k: top,
        histogram,
    }
}

pub fn profile_data(entry: &TableEntry, data: &TableData, opts: &ProfileOptions) -> TableProfile {
    let rows = data.row_count() as u64;
    let columns = entry
        .columns
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            profile_column(
                &spec.name,
                spec.declared_type,
                data.column(i).map(|c| c.map(str::to_string)),
                rows,
                opts,
            )
        })
        .collect();
    TableProfile {
        table_id: entry.table_id.clone(),
        row_count: rows,
        columns,
    }
}

/// Reads the table's backing file and profiles every column.
pub fn profile_table(
    catalog: &CatalogStore,
    entry: &TableEntry,
    opts: &ProfileOptions,
) -> Result<TableProfile, ProfileError> {
    let data = catalog.read_table(entry)?;
    Ok(profile_data(entry, &data, opts))
}

/// Profiles every table in parallel; output is ordered by table id.
pub fn profile_catalog(
    catalog: &CatalogStore,
    opts: &ProfileOptions,
) -> Result<Vec<TableProfile>, ProfileError> {
    use rayon::prelude::*;
    let entries: Vec<&TableEntry> = catalog.entries.values().collect();
    entries
        .par_iter()
        .map(|e| profile_table(catalog, e, opts))
        .collect()
}

pub fn column_histogram(
    catalog: &CatalogStore,
    entry: &TableEntry,
    column: &str,
    bins: usize,
) -> Result<Histogram, ProfileError> {
    let spec = entry
        .resolve_column(column)
        .ok_or_else(|| ProfileError::UnknownColumn {
            table: entry.table_id.clone(),
            column: column.to_string(),
        })?;
    if !spec.declared_type.is_numeric() {
        return Err(ProfileError::NotNumeric(spec.name.clone()));
    }
    let data = catalog.read_table(entry)?;
    let idx = entry
        .columns
        .iter()
        .position(|c| c.name == spec.name)
        .unwrap_or(0);
    let values: Vec<f64> = data
        .column(idx)
        .flatten()
        .filter_map(parse_finite)
        .collect();
    Ok(Histogram::build(&values, bins).unwrap_or(Histogram {
        min: 0.0,
        max: 0.0,
        counts: Vec::new(),
    }))
}

pub fn save_profiles(profiles: &[TableProfile], path: &Path) -> Result<(), ProfileError> {
    write_jsonl(path, PROFILES_FORMAT, PROFILES_VERSION, profiles)?;
    Ok(())
}

pub fn load_profiles(path: &Path) -> Result<Vec<TableProfile>, ProfileError> {
    Ok(read_jsonl(path, PROFILES_FORMAT, PROFILES_VERSION)?)
}
