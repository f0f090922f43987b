//! On-demand tools over the raw lake files: exact column profiling, value
//! presence lookup and pairwise joinability statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::catalog::{
    parse_finite, CatalogError, CatalogStore, ColumnSpec, ColumnType, TableEntry,
};
use crate::descriptor::fmt_float;
use crate::profiler::{numeric_key, profile_column, ColumnProfile, ProfileOptions};
use crate::table::TableData;

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {column} in table {table}")]
    UnknownColumn { table: String, column: String },
    #[error("column reference {0} must look like table.column")]
    BadColumnRef(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// `table.column`, split at the last dot so dotted table ids work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        Self {
            table: table.into(),
            column: column.into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self, ToolError> {
        match s.trim().rsplit_once('.') {
            Some((t, c)) if !t.is_empty() && !c.is_empty() => Ok(Self::new(t, c)),
            _ => Err(ToolError::BadColumnRef(s.to_string())),
        }
    }
}

impl std::fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

fn resolve<'a>(catalog: &'a CatalogStore, table: &str) -> Result<&'a TableEntry, ToolError> {
    catalog
        .resolve(table)
        .ok_or_else(|| ToolError::UnknownTable(table.to_string()))
}

fn resolve_column<'a>(
    entry: &'a TableEntry,
    column: &str,
) -> Result<(usize, &'a ColumnSpec), ToolError> {
    let spec = entry
        .resolve_column(column)
        .ok_or_else(|| ToolError::UnknownColumn {
            table: entry.table_id.clone(),
            column: column.to_string(),
        })?;
    let idx = entry
        .columns
        .iter()
        .position(|c| c.name == spec.name)
        .unwrap_or(0);
    Ok((idx, spec))
}

/// Comparison key: numeric columns compare by value, strings and booleans
/// case-insensitively, everything after trimming.
pub fn normalize(ty: ColumnType, cell: &str) -> String {
    let t = cell.trim();
    match ty {
        ColumnType::Integer | ColumnType::Float => match parse_finite(t) {
            Some(v) => numeric_key(v),
            None => t.to_string(),
        },
        ColumnType::String | ColumnType::Boolean => t.to_lowercase(),
        ColumnType::Date => t.to_string(),
    }
}

/// Full-scan profile of one column.
pub fn column_profiler(
    catalog: &CatalogStore,
    table: &str,
    column: &str,
) -> Result<ColumnProfile, ToolError> {
    let entry = resolve(catalog, table)?;
    let (idx, spec) = resolve_column(entry, column)?;
    let data = catalog.read_table(entry)?;
    Ok(profile_column(
        &spec.name,
        spec.declared_type,
        data.column(idx).map(|c| c.map(str::to_string)),
        data.row_count() as u64,
        &ProfileOptions::default(),
    ))
}

pub fn render_profile(table_id: &str, p: &ColumnProfile) -> String {
    let mut s = format!("column_profiler {table_id}.{}\n", p.column);
    let _ = writeln!(s, "type: {}", p.declared_type);
    let show = |e: &Option<crate::profiler::Extreme>| match e {
        Some(crate::profiler::Extreme::Number(v)) => fmt_float(*v),
        Some(crate::profiler::Extreme::Text(t)) => t.clone(),
        None => "-".into(),
    };
    let _ = writeln!(s, "min: {}  max: {}", show(&p.min), show(&p.max));
    if let (Some(m), Some(md)) = (p.mean, p.median) {
        let _ = writeln!(s, "mean: {}  median: {}", fmt_float(m), fmt_float(md));
    }
    let _ = writeln!(
        s,
        "distinct: {}  nulls: {} (ratio {})",
        p.distinct_count,
        p.null_count,
        fmt_float(p.null_ratio)
    );
    let top: Vec<String> = p
        .top_k
        .iter()
        .take(10)
        .map(|v| format!("{} ({})", v.value, v.count))
        .collect();
    let _ = writeln!(s, "top: {}", top.join(", "));
    if let Some(h) = &p.histogram {
        let counts: Vec<String> = h.counts.iter().map(u64::to_string).collect();
        let _ = writeln!(
            s,
            "histogram [{} .. {}]: {}",
            fmt_float(h.min),
            fmt_float(h.max),
            counts.join(" ")
        );
    }
    s.trim_end().to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindReport {
    pub table_id: String,
    /// Column searched; `None` means every column.
    pub column: Option<String>,
    pub value: String,
    pub found: bool,
    pub matching_columns: Vec<String>,
    pub match_count: BTreeMap<String, u64>,
}

impl FindReport {
    pub fn total_matches(&self) -> u64 {
        self.match_count.values().sum()
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "data_finder {} value=\"{}\" column={}\nfound: {}",
            self.table_id,
            self.value,
            self.column.as_deref().unwrap_or("*"),
            self.found
        );
        for (col, n) in self.match_count.iter().filter(|(_, n)| **n > 0).take(18) {
            let _ = write!(s, "\n{col}: {n} matching rows");
        }
        s
    }
}

fn cell_matches(ty: ColumnType, cell: &str, value: &str, numeric: Option<f64>) -> bool {
    match ty {
        ColumnType::Integer | ColumnType::Float => match (numeric, parse_finite(cell)) {
            (Some(v), Some(c)) => v == c,
            _ => cell.trim() == value,
        },
        ColumnType::String | ColumnType::Boolean => {
            cell.trim().to_lowercase() == value.to_lowercase()
        }
        ColumnType::Date => cell.trim() == value,
    }
}

/// Counts rows whose cell equals `value` after normalization, in one column
/// or in all of them.
pub fn data_finder(
    catalog: &CatalogStore,
    table: &str,
    value: &str,
    column: Option<&str>,
) -> Result<FindReport, ToolError> {
    let entry = resolve(catalog, table)?;
    let cols: Vec<(usize, &ColumnSpec)> = match column {
        Some(c) => vec![resolve_column(entry, c)?],
        None => entry.columns.iter().enumerate().collect(),
    };
    let data = catalog.read_table(entry)?;
    let needle = value.trim();
    let numeric = parse_finite(needle);
    let mut match_count = BTreeMap::new();
    for (idx, spec) in &cols {
        let n = data
            .column(*idx)
            .flatten()
            .filter(|cell| cell_matches(spec.declared_type, cell, needle, numeric))
            .count() as u64;
        match_count.insert(spec.name.clone(), n);
    }
    let matching_columns: Vec<String> = cols
        .iter()
        .filter(|(_, s)| match_count[&s.name] > 0)
        .map(|(_, s)| s.name.clone())
        .collect();
    Ok(FindReport {
        table_id: entry.table_id.clone(),
        column: column.map(|_| cols[0].1.name.clone()),
        value: value.to_string(),
        found: !matching_columns.is_empty(),
        matching_columns,
        match_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinabilityReport {
    pub left: ColumnRef,
    pub right: ColumnRef,
    pub left_distinct: u64,
    pub right_distinct: u64,
    pub overlap_count: u64,
    pub containment_lr: f64,
    pub containment_rl: f64,
    pub jaccard: f64,
    /// Fraction of non-null left values with no counterpart on the right.
    pub null_ref_ratio_lr: f64,
    /// Column types were incompatible; values were compared as strings.
    pub type_mismatch: bool,
}

impl JoinabilityReport {
    pub fn render(&self) -> String {
        let mut s = format!(
            "joinability_check {} ~ {}\ndistinct: left {} right {}\noverlap: {}\ncontainment left->right: {}\ncontainment right->left: {}\njaccard: {}\nunmatched left values: {}",
            self.left,
            self.right,
            self.left_distinct,
            self.right_distinct,
            self.overlap_count,
            fmt_float(self.containment_lr),
            fmt_float(self.containment_rl),
            fmt_float(self.jaccard),
            fmt_float(self.null_ref_ratio_lr),
        );
        if self.type_mismatch {
            s.push_str("\nwarning: column types differ; compared as text");
        }
        s
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn compatible(a: ColumnType, b: ColumnType) -> bool {
    a == b || (a.is_numeric() && b.is_numeric())
}

fn keys(data: &TableData, idx: usize, ty: ColumnType) -> Vec<String> {
    data.column(idx)
        .flatten()
        .map(|c| normalize(ty, c))
        .collect()
}

/// Exact distinct-set overlap statistics between two columns.
pub fn joinability_check(
    catalog: &CatalogStore,
    left: &ColumnRef,
    right: &ColumnRef,
) -> Result<JoinabilityReport, ToolError> {
    let le = resolve(catalog, &left.table)?;
    let (li, ls) = resolve_column(le, &left.column)?;
    let re = resolve(catalog, &right.table)?;
    let (ri, rs) = resolve_column(re, &right.column)?;
    let mismatch = !compatible(ls.declared_type, rs.declared_type);
    if mismatch {
        log::warn!(
            "joinability_check {left} ~ {right}: {} vs {}, comparing as text",
            ls.declared_type,
            rs.declared_type
        );
    }
    let (lt, rt) = if mismatch {
        (ColumnType::String, ColumnType::String)
    } else {
        (ls.declared_type, rs.declared_type)
    };
    let ldata = catalog.read_table(le)?;
    let rdata = if re.table_id == le.table_id {
        ldata.clone()
    } else {
        catalog.read_table(re)?
    };
    let lvals = keys(&ldata, li, lt);
    let rset: BTreeSet<String> = keys(&rdata, ri, rt).into_iter().collect();
    let lset: BTreeSet<&String> = lvals.iter().collect();
    let overlap = lset.iter().filter(|v| rset.contains(**v)).count() as u64;
    let union = lset.len() as u64 + rset.len() as u64 - overlap;
    let unmatched = lvals.iter().filter(|v| !rset.contains(*v)).count() as u64;
    Ok(JoinabilityReport {
        left: ColumnRef::new(le.table_id.clone(), ls.name.clone()),
        right: ColumnRef::new(re.table_id.clone(), rs.name.clone()),
        left_distinct: lset.len() as u64,
        right_distinct: rset.len() as u64,
        overlap_count: overlap,
        containment_lr: ratio(overlap, lset.len() as u64),
        containment_rl: ratio(overlap, rset.len() as u64),
        jaccard: ratio(overlap, union),
        null_ref_ratio_lr: ratio(unmatched, lvals.len() as u64),
        type_mismatch: mismatch,
    })
}
