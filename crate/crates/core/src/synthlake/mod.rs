//! Messy-lake generation from a clean relational dump: horizontal partitions,
//! lifecycle copies (`_prod`, `_stg`, `_test`) and low-quality variants
//! (`_broken_fk`, `_dups`, `_nulls`, `_subset`), each with a lineage record.
//!
//! Every injected count is `floor(rate * n)`; only the positions are random,
//! drawn from a ChaCha8 stream keyed by seed, table and operation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::artifacts::{read_jsonl, write_jsonl, JsonlError, LakePaths};
use crate::catalog::{ingest_lake, CatalogError, IngestOptions, TableEntry};
use crate::profiler::{profile_data, ProfileOptions, TableProfile};
use crate::providers::fnv1a64;
use crate::table::{self, TableData};

pub const LINEAGE_FORMAT: &str = "metalake-lineage";
pub const LINEAGE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("lineage file: {0}")]
    Lineage(#[from] JsonlError),
    #[error("output directory {0} is not empty")]
    OutputNotEmpty(PathBuf),
    #[error("derived table name {0} produced twice")]
    NameCollision(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("cannot write {path}: {reason}")]
    Write { path: PathBuf, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Operation {
    Partition,
    Prod,
    StgDuprows,
    StgNulls,
    TestSample,
    BrokenFk,
    Nulls,
    Dups,
    Subset,
}

impl Operation {
    /// Whether tables produced by this operation carry injected noise.
    pub fn is_noise(self) -> bool {
        !matches!(self, Operation::Partition | Operation::Prod)
    }

    /// Suffix appended to the source name, for non-partition operations.
    pub fn suffix(self) -> Option<&'static str> {
        Some(match self {
            Operation::Partition => return None,
            Operation::Prod => "_prod",
            Operation::StgDuprows | Operation::StgNulls => "_stg",
            Operation::TestSample => "_test",
            Operation::BrokenFk => "_broken_fk",
            Operation::Nulls => "_nulls",
            Operation::Dups => "_dups",
            Operation::Subset => "_subset",
        })
    }

    fn slug(self) -> &'static str {
        match self {
            Operation::Partition => "partition",
            Operation::Prod => "prod",
            Operation::StgDuprows => "stg_duprows",
            Operation::StgNulls => "stg_nulls",
            Operation::TestSample => "test_sample",
            Operation::BrokenFk => "broken_fk",
            Operation::Nulls => "nulls",
            Operation::Dups => "dups",
            Operation::Subset => "subset",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageRecord {
    pub derived_table_id: String,
    /// Immediate parent; follow the chain to reach the clean base.
    pub base_table_id: String,
    pub operation: Operation,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    pub human_note: String,
}

impl LineageRecord {
    /// `(column, value)` of a partition record; `None` value is the null bucket.
    pub fn partition_key(&self) -> Option<(&str, Option<&str>)> {
        if self.operation != Operation::Partition {
            return None;
        }
        let col = self.params.get("column")?.as_str()?;
        Some((col, self.params.get("value").and_then(Value::as_str)))
    }
}

pub fn load_lineage(path: &Path) -> Result<Vec<LineageRecord>, JsonlError> {
    read_jsonl(path, LINEAGE_FORMAT, LINEAGE_VERSION)
}

pub fn save_lineage(records: &[LineageRecord], path: &Path) -> Result<(), JsonlError> {
    write_jsonl(path, LINEAGE_FORMAT, LINEAGE_VERSION, records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthRates {
    pub stg_dup: f64,
    pub stg_null: f64,
    pub test_sample: f64,
    pub fk_null: f64,
    pub fk_oob: f64,
    pub lowq_dup: f64,
    pub lowq_subset: f64,
}

impl Default for SynthRates {
    fn default() -> Self {
        Self {
            stg_dup: 0.10,
            stg_null: 0.05,
            test_sample: 0.10,
            fk_null: 0.10,
            fk_oob: 0.05,
            lowq_dup: 0.10,
            lowq_subset: 0.20,
        }
    }
}

impl SynthRates {
    fn all(&self) -> [(&'static str, f64); 7] {
        [
            ("stg_dup", self.stg_dup),
            ("stg_null", self.stg_null),
            ("test_sample", self.test_sample),
            ("fk_null", self.fk_null),
            ("fk_oob", self.fk_oob),
            ("lowq_dup", self.lowq_dup),
            ("lowq_subset", self.lowq_subset),
        ]
    }
}

/// Which noise the `_stg` copy receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StgBranch {
    /// Seeded coin flip per table.
    #[default]
    Random,
    Duplicate,
    Nulls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    Prod,
    Stg,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowQuality {
    BrokenFk,
    Dups,
    Nulls,
    Subset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub rates: SynthRates,
    pub oob_value: String,
    pub partition_cardinality_range: [u64; 2],
    pub stg_branch: StgBranch,
    /// Lifecycle copies to emit.
    pub lifecycle: Vec<Lifecycle>,
    /// Low-quality variants to emit.
    pub low_quality: Vec<LowQuality>,
    /// Lifecycle copies counted under `duplicates` in the manifest.
    pub tally_lifecycle: Vec<Lifecycle>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            rates: SynthRates::default(),
            oob_value: "99999999".into(),
            partition_cardinality_range: [2, 12],
            stg_branch: StgBranch::Random,
            lifecycle: vec![Lifecycle::Prod, Lifecycle::Stg, Lifecycle::Test],
            low_quality: vec![
                LowQuality::BrokenFk,
                LowQuality::Dups,
                LowQuality::Nulls,
                LowQuality::Subset,
            ],
            tally_lifecycle: vec![Lifecycle::Prod, Lifecycle::Stg, Lifecycle::Test],
        }
    }
}

impl SynthConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, r) in self.rates.all() {
            if !(r > 0.0 && r < 1.0) {
                return Err(SynthError::InvalidConfig(format!(
                    "rate {name} = {r} must lie in (0, 1)"
                )));
            }
        }
        let [lo, hi] = self.partition_cardinality_range;
        if lo > hi {
            return Err(SynthError::InvalidConfig(format!(
                "partition cardinality range [{lo}, {hi}] is empty"
            )));
        }
        Ok(())
    }

    fn rng(&self, table: &str, op: Operation) -> ChaCha8Rng {
        let key = format!("{table}/{}", op.slug());
        ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(key.as_bytes()))
    }
}

/// Per-category counts in the layout of the usual lake statistics table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub base: usize,
    pub splits: usize,
    pub duplicates: usize,
    pub low_quality: usize,
    pub total: usize,
    pub seed: u64,
    pub base_tables: Vec<String>,
}

/// One table produced by the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedTable {
    pub name: String,
    pub data: TableData,
    pub record: LineageRecord,
}

fn is_key_column(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    lower.ends_with("_id")
}

/// `floor(rate * n)` with a floor of one row for non-empty tables.
fn sample_size(rate: f64, n: usize) -> usize {
    if n == 0 {
        0
    } else {
        ((rate * n as f64).floor() as usize).max(1)
    }
}

/// `floor(rate * n)` with no minimum, used for cell masks.
fn mask_size(rate: f64, n: usize) -> usize {
    (rate * n as f64).floor() as usize
}

fn sorted_sample(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx = sample(rng, n, k.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

/// Lowercase, with anything outside `[a-z0-9-]` replaced by `_`.
pub fn slug_value(value: &str) -> String {
    let s: String = value
        .trim()
        .chars()
        .map(|c| {
            let c = c.to_ascii_lowercase();
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "empty".into()
    } else {
        s
    }
}

/// Column names keep their case; characters unsafe in file names become `_`.
fn slug_column(name: &str) -> String {
    name.trim()
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// First column in schema order that is non-nullable, not an `_id` column and
/// has a distinct count inside the configured range.
pub fn choose_partition_key(
    entry: &TableEntry,
    profile: &TableProfile,
    config: &SynthConfig,
) -> Option<usize> {
    let [lo, hi] = config.partition_cardinality_range;
    entry.columns.iter().enumerate().find_map(|(i, spec)| {
        let prof = profile.columns.get(i)?;
        let eligible = !spec.nullable
            && !is_key_column(&spec.name)
            && (lo..=hi).contains(&prof.distinct_count);
        eligible.then_some(i)
    })
}

type Row = Vec<Option<String>>;

/// One sub-table per distinct value of `column`; rows with a null key go to a
/// `_null` bucket. Sub-tables appear in order of first occurrence.
pub fn partition_table(
    source: &str,
    data: &TableData,
    column: usize,
) -> Result<Vec<DerivedTable>, SynthError> {
    let col_name = &data.headers[column];
    let mut buckets: Vec<(Option<String>, Vec<Row>)> = Vec::new();
    let mut slot: BTreeMap<Option<String>, usize> = BTreeMap::new();
    for row in &data.rows {
        let key = row[column].as_ref().map(|v| v.trim().to_string());
        let i = *slot.entry(key.clone()).or_insert_with(|| {
            buckets.push((key, Vec::new()));
            buckets.len() - 1
        });
        buckets[i].1.push(row.clone());
    }
    let col_slug = slug_column(col_name);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(buckets.len());
    for (value, rows) in buckets {
        let value_slug = value
            .as_deref()
            .map(slug_value)
            .unwrap_or_else(|| "null".into());
        let name = format!("{source}_{col_slug}_{value_slug}");
        if !seen.insert(name.clone()) {
            return Err(SynthError::NameCollision(name));
        }
        let shown = value.clone().unwrap_or_else(|| "null".into());
        let mut params = BTreeMap::new();
        params.insert("column".into(), Value::from(col_name.clone()));
        params.insert(
            "value".into(),
            value.map(Value::from).unwrap_or(Value::Null),
        );
        out.push(DerivedTable {
            data: TableData {
                headers: data.headers.clone(),
                rows,
            },
            record: LineageRecord {
                derived_table_id: name.clone(),
                base_table_id: source.to_string(),
                operation: Operation::Partition,
                params,
                human_note: format!("Split partition of {source} where {col_name} is {shown}"),
            },
            name,
        });
    }
    Ok(out)
}

fn derived(
    source: &str,
    op: Operation,
    data: TableData,
    params: BTreeMap<String, Value>,
    note: String,
) -> DerivedTable {
    let name = format!("{source}{}", op.suffix().unwrap_or_default());
    DerivedTable {
        record: LineageRecord {
            derived_table_id: name.clone(),
            base_table_id: source.to_string(),
            operation: op,
            params,
            human_note: note,
        },
        name,
        data,
    }
}

fn append_sample(data: &TableData, rng: &mut ChaCha8Rng, k: usize) -> TableData {
    let mut out = data.clone();
    for i in sorted_sample(rng, data.rows.len(), k) {
        out.rows.push(data.rows[i].clone());
    }
    out
}

fn row_subset(data: &TableData, rng: &mut ChaCha8Rng, k: usize) -> TableData {
    TableData {
        headers: data.headers.clone(),
        rows: sorted_sample(rng, data.rows.len(), k)
            .into_iter()
            .map(|i| data.rows[i].clone())
            .collect(),
    }
}

/// Nulls `floor(rate * n)` non-null cells in each selected column.
fn mask_nulls(
    data: &TableData,
    rng: &mut ChaCha8Rng,
    rate: f64,
    columns: &[usize],
) -> (TableData, u64) {
    let mut out = data.clone();
    let n = data.rows.len();
    let mut masked = 0u64;
    for &c in columns {
        let present: Vec<usize> = (0..n).filter(|&r| data.rows[r][c].is_some()).collect();
        let k = mask_size(rate, n).min(present.len());
        for p in sorted_sample(rng, present.len(), k) {
            out.rows[present[p]][c] = None;
            masked += 1;
        }
    }
    (out, masked)
}

fn rate_params(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

/// `_prod`, `_stg` and `_test` copies of `source`.
pub fn make_lifecycle_variants(
    source: &str,
    data: &TableData,
    config: &SynthConfig,
) -> Vec<DerivedTable> {
    let n = data.rows.len();
    let rates = &config.rates;
    let mut out = Vec::new();
    for stage in &config.lifecycle {
        match stage {
            Lifecycle::Prod => out.push(derived(
                source,
                Operation::Prod,
                data.clone(),
                BTreeMap::new(),
                format!("Clean PROD version of {source}"),
            )),
            Lifecycle::Stg => {
                let dup = match config.stg_branch {
                    StgBranch::Duplicate => true,
                    StgBranch::Nulls => false,
                    StgBranch::Random => config.rng(source, Operation::StgDuprows).random_bool(0.5),
                };
                if dup {
                    let mut rng = config.rng(source, Operation::StgDuprows);
                    let k = sample_size(rates.stg_dup, n);
                    out.push(derived(
                        source,
                        Operation::StgDuprows,
                        append_sample(data, &mut rng, k),
                        rate_params(&[("rate", rates.stg_dup.into()), ("appended_rows", k.into())]),
                        format!("Dirty STG version of {source}: duplicated rows appended"),
                    ));
                } else {
                    let mut rng = config.rng(source, Operation::StgNulls);
                    let cols: Vec<usize> = (0..data.headers.len()).collect();
                    let (masked, count) = mask_nulls(data, &mut rng, rates.stg_null, &cols);
                    out.push(derived(
                        source,
                        Operation::StgNulls,
                        masked,
                        rate_params(&[
                            ("rate", rates.stg_null.into()),
                            ("masked_cells", count.into()),
                        ]),
                        format!("Dirty STG version of {source}: values masked with NULL"),
                    ));
                }
            }
            Lifecycle::Test => {
                let mut rng = config.rng(source, Operation::TestSample);
                let k = sample_size(rates.test_sample, n);
                out.push(derived(
                    source,
                    Operation::TestSample,
                    row_subset(data, &mut rng, k),
                    rate_params(&[("rate", rates.test_sample.into()), ("rows", k.into())]),
                    format!("Sample TEST version of {source}"),
                ));
            }
        }
    }
    out
}

/// `_broken_fk` (only with `_id` columns), `_dups`, `_nulls` and `_subset`.
pub fn make_lowquality_variants(
    source: &str,
    data: &TableData,
    config: &SynthConfig,
) -> Vec<DerivedTable> {
    let n = data.rows.len();
    let rates = &config.rates;
    let key_cols: Vec<usize> = (0..data.headers.len())
        .filter(|&c| is_key_column(&data.headers[c]))
        .collect();
    let mut out = Vec::new();
    for variant in &config.low_quality {
        match variant {
            LowQuality::BrokenFk => {
                if key_cols.is_empty() {
                    continue;
                }
                let mut rng = config.rng(source, Operation::BrokenFk);
                let mut broken = data.clone();
                let (n_null, n_oob) = (mask_size(rates.fk_null, n), mask_size(rates.fk_oob, n));
                for &c in &key_cols {
                    let present: Vec<usize> =
                        (0..n).filter(|&r| data.rows[r][c].is_some()).collect();
                    let k = (n_null + n_oob).min(present.len());
                    // Unsorted draw: the first n_null positions are nulled, the rest get oob.
                    let picks = sample(&mut rng, present.len(), k).into_vec();
                    for (j, p) in picks.into_iter().enumerate() {
                        broken.rows[present[p]][c] = if j < n_null {
                            None
                        } else {
                            Some(config.oob_value.clone())
                        };
                    }
                }
                let names: Vec<&str> = key_cols.iter().map(|&c| data.headers[c].as_str()).collect();
                out.push(derived(
                    source,
                    Operation::BrokenFk,
                    broken,
                    rate_params(&[
                        ("columns", names.clone().into()),
                        ("null_rate", rates.fk_null.into()),
                        ("oob_rate", rates.fk_oob.into()),
                        ("oob_value", config.oob_value.clone().into()),
                    ]),
                    format!("Broke FK columns in {}", names.join(", ")),
                ));
            }
            LowQuality::Dups => {
                let mut rng = config.rng(source, Operation::Dups);
                let k = sample_size(rates.lowq_dup, n);
                out.push(derived(
                    source,
                    Operation::Dups,
                    append_sample(data, &mut rng, k),
                    rate_params(&[("rate", rates.lowq_dup.into()), ("appended_rows", k.into())]),
                    format!("Duplicated rows to {source}"),
                ));
            }
            LowQuality::Nulls => {
                let mut rng = config.rng(source, Operation::Nulls);
                let cols: Vec<usize> = (0..data.headers.len())
                    .filter(|c| !key_cols.contains(c))
                    .collect();
                let (masked, count) = mask_nulls(data, &mut rng, rates.stg_null, &cols);
                out.push(derived(
                    source,
                    Operation::Nulls,
                    masked,
                    rate_params(&[
                        ("rate", rates.stg_null.into()),
                        ("masked_cells", count.into()),
                    ]),
                    format!("Injected random NULLs into {source}"),
                ));
            }
            LowQuality::Subset => {
                let mut rng = config.rng(source, Operation::Subset);
                let k = sample_size(rates.lowq_subset, n);
                out.push(derived(
                    source,
                    Operation::Subset,
                    row_subset(data, &mut rng, k),
                    rate_params(&[("rate", rates.lowq_subset.into()), ("rows", k.into())]),
                    format!("A subset of {source}"),
                ));
            }
        }
    }
    out
}

/// Everything derived from one base table.
#[derive(Debug, Clone)]
struct BaseOutput {
    base: String,
    base_data: TableData,
    base_description: Option<String>,
    splits: Vec<DerivedTable>,
    variants: Vec<DerivedTable>,
}

fn derive_from_base(
    entry: &TableEntry,
    data: TableData,
    profile: &TableProfile,
    config: &SynthConfig,
) -> Result<BaseOutput, SynthError> {
    let base = entry.table_id.clone();
    let splits = match choose_partition_key(entry, profile, config) {
        Some(col) => partition_table(&base, &data, col)?,
        None => Vec::new(),
    };
    let mut variants = Vec::new();
    let sources = std::iter::once((&base, &data)).chain(splits.iter().map(|s| (&s.name, &s.data)));
    for (name, d) in sources {
        variants.extend(make_lifecycle_variants(name, d, config));
        variants.extend(make_lowquality_variants(name, d, config));
    }
    Ok(BaseOutput {
        base,
        base_data: data,
        base_description: entry.user_description.clone(),
        splits,
        variants,
    })
}

/// Result of a generator run.
#[derive(Debug, Clone)]
pub struct SynthReport {
    pub manifest: Manifest,
    pub records: Vec<LineageRecord>,
}

fn write_table(
    dir: &Path,
    name: &str,
    data: &TableData,
    note: Option<&str>,
) -> Result<(), SynthError> {
    let path = dir.join(format!("{name}.csv"));
    table::write_csv(&path, data).map_err(|e| SynthError::Write {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if let Some(note) = note.filter(|n| !n.trim().is_empty()) {
        std::fs::write(dir.join(format!("{name}.txt")), format!("{note}\n"))?;
    }
    Ok(())
}

/// Builds the messy lake under `out_dir` from the clean lake at `clean_dir`.
/// Base tables are copied, derived tables are written flat next to them with a
/// `.txt` sidecar carrying the lineage note, and `.metalake/` receives the
/// lineage file and manifest.
pub fn build_messy_lake(
    clean_dir: &Path,
    out_dir: &Path,
    config: &SynthConfig,
) -> Result<SynthReport, SynthError> {
    config.validate()?;
    if out_dir.exists() && std::fs::read_dir(out_dir)?.next().is_some() {
        return Err(SynthError::OutputNotEmpty(out_dir.to_path_buf()));
    }
    let (catalog, _) = ingest_lake(
        clean_dir,
        &IngestOptions {
            full_scan: true,
            ..Default::default()
        },
    )?;
    let entries: Vec<&TableEntry> = catalog.entries.values().collect();
    let outputs: Vec<BaseOutput> = entries
        .par_iter()
        .map(|entry| {
            let mut data = catalog.read_table(entry)?;
            // Keep the original headers so partition names carry source column names.
            data.headers = table::read_csv_limited(&catalog.table_path(entry), 0)
                .map(|(d, _)| d.headers)
                .unwrap_or(data.headers);
            let profile = profile_data(entry, &data, &ProfileOptions::default());
            derive_from_base(entry, data, &profile, config)
        })
        .collect::<Result<_, _>>()?;

    std::fs::create_dir_all(out_dir)?;
    let mut names = BTreeSet::new();
    let mut records = Vec::new();
    let mut splits = 0;
    let mut duplicates = 0;
    let mut low_quality = 0;
    let mut base_tables = Vec::new();
    for out in &outputs {
        if !names.insert(out.base.clone()) {
            return Err(SynthError::NameCollision(out.base.clone()));
        }
        base_tables.push(out.base.clone());
        write_table(
            out_dir,
            &out.base,
            &out.base_data,
            out.base_description.as_deref(),
        )?;
        for t in out.splits.iter().chain(&out.variants) {
            if !names.insert(t.name.clone()) {
                return Err(SynthError::NameCollision(t.name.clone()));
            }
            let note = match &out.base_description {
                Some(d) => format!("{d}\n\n{}", t.record.human_note),
                None => t.record.human_note.clone(),
            };
            write_table(out_dir, &t.name, &t.data, Some(&note))?;
            match t.record.operation {
                Operation::Partition => splits += 1,
                Operation::Prod => {
                    duplicates += config.tally_lifecycle.contains(&Lifecycle::Prod) as usize
                }
                Operation::StgDuprows | Operation::StgNulls => {
                    duplicates += config.tally_lifecycle.contains(&Lifecycle::Stg) as usize
                }
                Operation::TestSample => {
                    duplicates += config.tally_lifecycle.contains(&Lifecycle::Test) as usize
                }
                _ => low_quality += 1,
            }
            records.push(t.record.clone());
        }
    }
    records.sort_by(|a, b| a.derived_table_id.cmp(&b.derived_table_id));
    let paths = LakePaths::new(out_dir);
    save_lineage(&records, &paths.lineage())?;
    let manifest = Manifest {
        base: base_tables.len(),
        splits,
        duplicates,
        low_quality,
        total: names.len(),
        seed: config.seed,
        base_tables,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(paths.manifest(), format!("{json}\n"))?;
    Ok(SynthReport { manifest, records })
}

pub fn load_manifest(path: &Path) -> Result<Manifest, SynthError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| SynthError::InvalidConfig(format!("manifest: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ColumnSpec, ColumnType};

    fn fixture(n: usize) -> TableData {
        TableData {
            headers: vec!["card_id".into(), "type".into(), "score".into()],
            rows: (0..n)
                .map(|i| {
                    vec![
                        Some(i.to_string()),
                        Some(["classic", "junior", "gold"][i % 3].to_string()),
                        Some((i * 7 % 13).to_string()),
                    ]
                })
                .collect(),
        }
    }

    fn count(
        rows: &[Vec<Option<String>>],
        col: usize,
        pred: impl Fn(&Option<String>) -> bool,
    ) -> usize {
        rows.iter().filter(|r| pred(&r[col])).count()
    }

    #[test]
    fn floor_rules() {
        assert_eq!(sample_size(0.10, 100), 10);
        assert_eq!(sample_size(0.10, 5), 1);
        assert_eq!(sample_size(0.10, 0), 0);
        assert_eq!(sample_size(0.20, 50), 10);
        assert_eq!(mask_size(0.05, 10), 0);
        assert_eq!(mask_size(0.05, 100), 5);
    }

    #[test]
    fn broken_fk_counts_are_exact() {
        let data = fixture(100);
        let out = make_lowquality_variants("card", &data, &SynthConfig::default());
        let fk = out.iter().find(|t| t.name == "card_broken_fk").unwrap();
        assert_eq!(count(&fk.data.rows, 0, Option::is_none), 10);
        assert_eq!(
            count(&fk.data.rows, 0, |c| c.as_deref() == Some("99999999")),
            5
        );
        assert_eq!(fk.record.human_note, "Broke FK columns in card_id");
        // Non-key columns untouched.
        assert_eq!(
            fk.data.rows.iter().map(|r| &r[1]).collect::<Vec<_>>(),
            data.rows.iter().map(|r| &r[1]).collect::<Vec<_>>()
        );
    }

    #[test]
    fn lifecycle_row_counts() {
        let data = fixture(100);
        let config = SynthConfig {
            stg_branch: StgBranch::Duplicate,
            ..Default::default()
        };
        let out = make_lifecycle_variants("card", &data, &config);
        let by_name: BTreeMap<_, _> = out.iter().map(|t| (t.name.as_str(), t)).collect();
        assert_eq!(by_name["card_prod"].data, data);
        assert_eq!(by_name["card_stg"].data.rows.len(), 110);
        assert_eq!(by_name["card_test"].data.rows.len(), 10);
        assert_eq!(
            by_name["card_prod"].record.human_note,
            "Clean PROD version of card"
        );
    }

    #[test]
    fn stg_null_branch_masks_five_percent_per_column() {
        let data = fixture(100);
        let config = SynthConfig {
            stg_branch: StgBranch::Nulls,
            ..Default::default()
        };
        let out = make_lifecycle_variants("card", &data, &config);
        let stg = out.iter().find(|t| t.name == "card_stg").unwrap();
        assert_eq!(stg.record.operation, Operation::StgNulls);
        for c in 0..3 {
            assert_eq!(count(&stg.data.rows, c, Option::is_none), 5);
        }
    }

    #[test]
    fn empty_table_variants_are_empty() {
        let data = TableData {
            headers: vec!["a_id".into()],
            rows: vec![],
        };
        let config = SynthConfig::default();
        for t in make_lifecycle_variants("e", &data, &config)
            .into_iter()
            .chain(make_lowquality_variants("e", &data, &config))
        {
            assert!(t.data.rows.is_empty(), "{}", t.name);
        }
    }

    #[test]
    fn no_broken_fk_without_id_columns() {
        let data = TableData {
            headers: vec!["x".into()],
            rows: vec![vec![Some("1".into())]],
        };
        let out = make_lowquality_variants("t", &data, &SynthConfig::default());
        assert!(out
            .iter()
            .all(|t| t.record.operation != Operation::BrokenFk));
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn subset_of_fifty_rows() {
        let out = make_lowquality_variants("card", &fixture(50), &SynthConfig::default());
        let s = out.iter().find(|t| t.name == "card_subset").unwrap();
        assert_eq!(s.data.rows.len(), 10);
    }

    #[test]
    fn partition_names_and_cover() {
        let data = fixture(30);
        let parts = partition_table("card", &data, 1).unwrap();
        let names: Vec<_> = parts.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(
            names,
            ["card_type_classic", "card_type_junior", "card_type_gold"]
        );
        assert_eq!(
            parts[0].record.human_note,
            "Split partition of card where type is classic"
        );
        let mut union: Vec<_> = parts.iter().flat_map(|p| p.data.rows.clone()).collect();
        let mut base = data.rows.clone();
        union.sort();
        base.sort();
        assert_eq!(union, base);
    }

    #[test]
    fn constant_column_partition_equals_base() {
        let data = TableData {
            headers: vec!["Region".into()],
            rows: vec![vec![Some("East Bohemia".into())]; 4],
        };
        let parts = partition_table("district", &data, 0).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].name, "district_Region_east_bohemia");
        assert_eq!(parts[0].data, data);
    }

    #[test]
    fn null_key_rows_get_their_own_bucket() {
        let data = TableData {
            headers: vec!["k".into()],
            rows: vec![vec![Some("a".into())], vec![None]],
        };
        let parts = partition_table("t", &data, 0).unwrap();
        assert_eq!(parts[1].name, "t_k_null");
        assert_eq!(parts[1].record.partition_key(), Some(("k", None)));
    }

    #[test]
    fn slug_collision_is_an_error() {
        let data = TableData {
            headers: vec!["k".into()],
            rows: vec![vec![Some("A b".into())], vec![Some("a_b".into())]],
        };
        assert!(matches!(
            partition_table("t", &data, 0),
            Err(SynthError::NameCollision(_))
        ));
    }

    fn entry(cols: &[(&str, bool)]) -> TableEntry {
        TableEntry {
            table_id: "t".into(),
            name: "t".into(),
            source_path: "t.csv".into(),
            columns: cols
                .iter()
                .map(|(n, nullable)| ColumnSpec {
                    name: n.to_string(),
                    declared_type: ColumnType::String,
                    nullable: *nullable,
                })
                .collect(),
            row_count: 0,
            user_description: None,
            lineage_id: None,
        }
    }

    #[test]
    fn partition_key_heuristic() {
        let e = entry(&[("card_id", false), ("type", false), ("score", false)]);
        let p = profile_data(&e, &fixture(30), &ProfileOptions::default());
        assert_eq!(
            choose_partition_key(&e, &p, &SynthConfig::default()),
            Some(1)
        );

        let e = entry(&[("team_id", false), ("name", false)]);
        let d = TableData {
            headers: vec!["team_id".into(), "name".into()],
            rows: (0..20)
                .map(|i| vec![Some((i % 3).to_string()), Some(format!("n{i}"))])
                .collect(),
        };
        let p = profile_data(&e, &d, &ProfileOptions::default());
        assert_eq!(choose_partition_key(&e, &p, &SynthConfig::default()), None);
    }

    #[test]
    fn invalid_rates_rejected() {
        let mut c = SynthConfig::default();
        c.rates.fk_oob = 1.0;
        assert!(c.validate().is_err());
        assert!(SynthConfig::default().validate().is_ok());
    }

    #[test]
    fn config_defaults_from_empty_json() {
        let c: SynthConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, SynthConfig::default());
        assert_eq!(c.oob_value, "99999999");
        assert_eq!(c.partition_cardinality_range, [2, 12]);
    }

    #[test]
    fn messy_lake_end_to_end() {
        let clean = tempfile::tempdir().unwrap();
        table::write_csv(&clean.path().join("card.csv"), &fixture(30)).unwrap();
        std::fs::write(clean.path().join("card.txt"), "Cards issued to clients.").unwrap();
        let out = tempfile::tempdir().unwrap();
        let messy = out.path().join("messy");
        let report = build_messy_lake(clean.path(), &messy, &SynthConfig::default()).unwrap();
        let m = &report.manifest;
        assert_eq!((m.base, m.splits), (1, 3));
        // 4 sources x 3 lifecycle copies, 4 sources x 4 low-quality variants.
        assert_eq!((m.duplicates, m.low_quality), (12, 16));
        assert_eq!(m.total, 1 + 3 + 12 + 16);
        assert_eq!(report.records.len(), m.total - m.base);
        let loaded = load_lineage(&LakePaths::new(&messy).lineage()).unwrap();
        assert_eq!(loaded, report.records);
        let note = std::fs::read_to_string(messy.join("card_type_gold_prod.txt")).unwrap();
        assert!(note.contains("Cards issued to clients."));
        assert!(note.contains("Clean PROD version of card_type_gold"));
        assert!(matches!(
            build_messy_lake(clean.path(), &messy, &SynthConfig::default()),
            Err(SynthError::OutputNotEmpty(_))
        ));
    }
}
