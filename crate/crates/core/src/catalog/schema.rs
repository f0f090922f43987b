use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Column types in narrowing order: inference picks the first one that
/// accepts every non-null cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ColumnType {
    Boolean,
    Integer,
    Float,
    Date,
    String,
}

impl ColumnType {
    pub const NARROWING_ORDER: [ColumnType; 5] = [
        ColumnType::Boolean,
        ColumnType::Integer,
        ColumnType::Float,
        ColumnType::Date,
        ColumnType::String,
    ];

    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnType::Integer | ColumnType::Float)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Boolean => "BOOLEAN",
            ColumnType::Integer => "INTEGER",
            ColumnType::Float => "FLOAT",
            ColumnType::Date => "DATE",
            ColumnType::String => "STRING",
        }
    }

    /// Whether a (non-null) cell parses as this type.
    pub fn accepts(self, cell: &str) -> bool {
        let c = cell.trim();
        match self {
            ColumnType::Boolean => {
                c.eq_ignore_ascii_case("true") || c.eq_ignore_ascii_case("false")
            }
            ColumnType::Integer => c.parse::<i64>().is_ok(),
            ColumnType::Float => parse_finite(c).is_some(),
            ColumnType::Date => parse_date(c).is_some(),
            ColumnType::String => true,
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColumnType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ColumnType::NARROWING_ORDER
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown column type {s:?}"))
    }
}

/// Parses a finite number; rejects textual forms such as `inf` or `NaN`.
pub fn parse_finite(cell: &str) -> Option<f64> {
    let c = cell.trim();
    if !c.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    c.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// ISO calendar dates (`YYYY-MM-DD`).
pub fn parse_date(cell: &str) -> Option<chrono::NaiveDate> {
    chrono::NaiveDate::parse_from_str(cell.trim(), "%Y-%m-%d").ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub declared_type: ColumnType,
    pub nullable: bool,
}

/// Maps a raw header to a database-safe identifier.
///
/// Lowercase ASCII, every other character becomes `_`, runs of `_` collapse
/// and edge underscores are trimmed. A leading digit gets a `c_` prefix and an
/// empty result becomes `col`. The function is idempotent.
pub fn sanitize_identifier(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for ch in raw.chars() {
        let mapped = if ch.is_ascii_alphanumeric() {
            ch.to_ascii_lowercase()
        } else {
            '_'
        };
        if mapped == '_' && out.ends_with('_') {
            continue;
        }
        out.push(mapped);
    }
    let trimmed = out.trim_matches('_');
    if trimmed.is_empty() {
        return "col".to_string();
    }
    if trimmed.starts_with(|c: char| c.is_ascii_digit()) {
        format!("c_{trimmed}")
    } else {
        trimmed.to_string()
    }
}

/// Sanitizes a full header row, suffixing repeats with `_2`, `_3`, ...
pub fn sanitize_headers(raw: &[String]) -> Vec<String> {
    let mut used: HashSet<String> = HashSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for h in raw {
        let base = sanitize_identifier(h);
        let mut name = base.clone();
        let mut n = 2;
        while used.contains(&name) {
            name = format!("{base}_{n}");
            n += 1;
        }
        used.insert(name.clone());
        out.push(name);
    }
    out
}

/// Infers one column's type from its cells (`None` = null).
///
/// A column without any non-null cell is typed `STRING`.
pub fn infer_column<'a>(cells: impl IntoIterator<Item = Option<&'a str>>) -> (ColumnType, bool) {
    let mut candidates = ColumnType::NARROWING_ORDER.to_vec();
    let mut nullable = false;
    let mut seen_value = false;
    for cell in cells {
        match cell {
            None => nullable = true,
            Some(c) => {
                seen_value = true;
                candidates.retain(|t| t.accepts(c));
            }
        }
    }
    if !seen_value {
        return (ColumnType::String, nullable);
    }
    (candidates[0], nullable)
}

/// Infers column specs from sanitized names and decoded rows.
pub fn infer_schema(names: &[String], rows: &[Vec<Option<String>>]) -> Vec<ColumnSpec> {
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let (declared_type, nullable) =
                infer_column(rows.iter().map(|r| r.get(i).and_then(|c| c.as_deref())));
            ColumnSpec {
                name: name.clone(),
                declared_type,
                nullable,
            }
        })
        .collect()
}
