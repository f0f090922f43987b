//! Lake ingestion into a persistent table catalog.
//!
//! Every `*.csv` under the lake root becomes one [`TableEntry`]. A sibling
//! `<stem>.txt` or `<stem>.md` is attached as the user description, and if a
//! lineage file is present (synthetic lakes) each derived table is linked to
//! its record.

mod schema;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

pub use schema::{
    infer_column, infer_schema, parse_date, parse_finite, sanitize_headers, sanitize_identifier,
    ColumnSpec, ColumnType,
};

use crate::artifacts::{read_jsonl, write_jsonl, JsonlError, LakePaths, META_DIR};
use crate::table::{self, TableData};

pub const CATALOG_FORMAT: &str = "metalake-catalog";
pub const CATALOG_VERSION: u32 = 1;

/// Rows scanned for type inference unless a full scan is requested.
pub const DEFAULT_INFERENCE_CAP: usize = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("lake root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
    #[error("corrupt catalog: {0}")]
    CorruptCatalog(String),
    #[error("unreadable file {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<JsonlError> for CatalogError {
    fn from(e: JsonlError) -> Self {
        match e {
            JsonlError::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound => {
                CatalogError::Io(source)
            }
            other => CatalogError::CorruptCatalog(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub table_id: String,
    pub name: String,
    /// Path of the backing CSV relative to the lake root, `/`-separated.
    pub source_path: String,
    pub columns: Vec<ColumnSpec>,
    pub row_count: u64,
    pub user_description: Option<String>,
    pub lineage_id: Option<String>,
}

impl TableEntry {
    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Resolves a user-supplied column reference: exact, case-insensitive, then sanitized.
    pub fn resolve_column(&self, name: &str) -> Option<&ColumnSpec> {
        self.column(name)
            .or_else(|| {
                self.columns
                    .iter()
                    .find(|c| c.name.eq_ignore_ascii_case(name))
            })
            .or_else(|| self.column(&sanitize_identifier(name)))
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogStore {
    pub lake_root: PathBuf,
    pub entries: BTreeMap<String, TableEntry>,
}

impl CatalogStore {
    pub fn new(lake_root: impl Into<PathBuf>) -> Self {
        Self {
            lake_root: lake_root.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, table_id: &str) -> Option<&TableEntry> {
        self.entries.get(table_id)
    }

    /// Looks a table up by id, then by unique case-insensitive name.
    pub fn resolve(&self, id_or_name: &str) -> Option<&TableEntry> {
        if let Some(e) = self.entries.get(id_or_name) {
            return Some(e);
        }
        let mut hits = self.entries.values().filter(|e| {
            e.name.eq_ignore_ascii_case(id_or_name) || e.table_id.eq_ignore_ascii_case(id_or_name)
        });
        match (hits.next(), hits.next()) {
            (Some(e), None) => Some(e),
            _ => None,
        }
    }

    pub fn table_path(&self, entry: &TableEntry) -> PathBuf {
        self.lake_root.join(&entry.source_path)
    }

    /// Reads the full backing file of a table.
    pub fn read_table(&self, entry: &TableEntry) -> Result<TableData, CatalogError> {
        let path = self.table_path(entry);
        let mut data = table::read_csv(&path).map_err(|e| CatalogError::UnreadableFile {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        data.headers = entry.columns.iter().map(|c| c.name.clone()).collect();
        Ok(data)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Scan every row for type inference instead of the first
    /// [`DEFAULT_INFERENCE_CAP`] rows.
    pub full_scan: bool,
    pub inference_cap: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            full_scan: false,
            inference_cap: DEFAULT_INFERENCE_CAP,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub ingested: usize,
    pub empty_tables: Vec<String>,
    pub skipped: Vec<SkippedFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

/// Derives the stable id of a table from its path relative to the lake root:
/// extension dropped, separators replaced by `.`.
pub fn table_id_for(rel: &Path) -> String {
    let stem = rel.with_extension("");
    stem.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(".")
}

fn rel_string(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn csv_files(root: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || e.file_name() != META_DIR)
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| {
            p.extension()
                .is_some_and(|x| x.to_string_lossy().eq_ignore_ascii_case("csv"))
        })
        .collect();
    files.sort();
    files
}

fn read_sidecar(csv_path: &Path) -> Option<String> {
    let parts: Vec<String> = ["txt", "md"]
        .iter()
        .filter_map(|ext| std::fs::read_to_string(csv_path.with_extension(ext)).ok())
        .map(|s| s.trim_end().to_string())
        .filter(|s| !s.trim().is_empty())
        .collect();
    (!parts.is_empty()).then(|| parts.join("\n\n"))
}

fn ingest_file(root: &Path, path: &Path, opts: &IngestOptions) -> Result<TableEntry, String> {
    let rel = path.strip_prefix(root).map_err(|e| e.to_string())?;
    let limit = if opts.full_scan {
        usize::MAX
    } else {
        opts.inference_cap
    };
    let (data, total) = table::read_csv_limited(path, limit).map_err(|e| e.to_string())?;
    if data.headers.is_empty() || data.headers.iter().all(|h| h.trim().is_empty()) {
        return Err("missing header row".into());
    }
    let names = sanitize_headers(&data.headers);
    let columns = infer_schema(&names, &data.rows);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(TableEntry {
        table_id: table_id_for(rel),
        name,
        source_path: rel_string(rel),
        columns,
        row_count: total as u64,
        user_description: read_sidecar(path),
        lineage_id: None,
    })
}

/// Scans `root` for CSV files and builds a catalog. Files that cannot be read
/// are skipped and listed in the report.
pub fn ingest_lake(
    root: &Path,
    opts: &IngestOptions,
) -> Result<(CatalogStore, IngestReport), CatalogError> {
    if !root.is_dir() {
        return Err(CatalogError::MissingRoot(root.to_path_buf()));
    }
    let files = csv_files(root);
    let results: Vec<(PathBuf, Result<TableEntry, String>)> = files
        .par_iter()
        .map(|p| (p.clone(), ingest_file(root, p, opts)))
        .collect();

    let lineage_ids = load_lineage_ids(root);
    let mut store = CatalogStore::new(root);
    let mut report = IngestReport::default();
    for (path, res) in results {
        let shown = path
            .strip_prefix(root)
            .map(rel_string)
            .unwrap_or_else(|_| path.display().to_string());
        match res {
            Ok(mut entry) => {
                if store.entries.contains_key(&entry.table_id) {
                    log::warn!(
                        "skipping {shown}: table id {} already taken",
                        entry.table_id
                    );
                    report.skipped.push(SkippedFile {
                        path: shown,
                        reason: format!("table id collision on {}", entry.table_id),
                    });
                    continue;
                }
                if lineage_ids.contains(&entry.table_id) {
                    entry.lineage_id = Some(entry.table_id.clone());
                }
                if entry.row_count == 0 {
                    report.empty_tables.push(entry.table_id.clone());
                }
                store.entries.insert(entry.table_id.clone(), entry);
            }
            Err(reason) => {
                log::warn!("skipping unreadable file {shown}: {reason}");
                report.skipped.push(SkippedFile {
                    path: shown,
                    reason,
                });
            }
        }
    }
    report.ingested = store.len();
    Ok((store, report))
}

fn load_lineage_ids(root: &Path) -> HashSet<String> {
    let path = LakePaths::new(root).lineage();
    if !path.exists() {
        return HashSet::new();
    }
    match crate::synthlake::load_lineage(&path) {
        Ok(records) => records.into_iter().map(|r| r.derived_table_id).collect(),
        Err(e) => {
            log::warn!("ignoring unreadable lineage file: {e}");
            HashSet::new()
        }
    }
}

pub fn save_catalog(catalog: &CatalogStore, path: &Path) -> Result<(), CatalogError> {
    write_jsonl(
        path,
        CATALOG_FORMAT,
        CATALOG_VERSION,
        catalog.entries.values(),
    )?;
    Ok(())
}

/// Loads a catalog file. The lake root is the parent of the `.metalake`
/// directory holding the file, or the file's own directory otherwise.
pub fn load_catalog(path: &Path) -> Result<CatalogStore, CatalogError> {
    let entries: Vec<TableEntry> = read_jsonl(path, CATALOG_FORMAT, CATALOG_VERSION)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let root = if dir.file_name().is_some_and(|n| n == META_DIR) {
        dir.parent().unwrap_or(Path::new(".")).to_path_buf()
    } else {
        dir.to_path_buf()
    };
    let mut store = CatalogStore::new(root);
    for e in entries {
        if store.entries.insert(e.table_id.clone(), e).is_some() {
            return Err(CatalogError::CorruptCatalog(format!(
                "{}: duplicate table id",
                path.display()
            )));
        }
    }
    Ok(store)
}
