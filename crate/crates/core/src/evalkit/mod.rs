//! Scoring for table-selection runs: set metrics against reference tables,
//! lineage-aware verification against gold SQL, Recall@K for retrieval
//! baselines and the distribution of selected table kinds.

mod sql;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use sql::{parse_gold_sql, ColumnConstraint, GoldQuerySpec, TableRef, UnsupportedSql};

use crate::catalog::parse_finite;
use crate::providers::Embedder;
use crate::search::{baseline_topk, SearchError, SearchParams, VectorIndex};
use crate::synthlake::{LineageRecord, Operation};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("reference set is empty")]
    EmptyReference,
    #[error("no lineage for table {0}")]
    UnknownLineage(String),
    #[error("lineage cycle at table {0}")]
    LineageCycle(String),
    #[error("task file line {line}: {reason}")]
    BadTask { line: usize, reason: String },
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl Scores {
    pub fn from_pr(recall: f64, precision: f64) -> Self {
        let f1 = if recall + precision == 0.0 {
            0.0
        } else {
            2.0 * recall * precision / (recall + precision)
        };
        Self {
            recall,
            precision,
            f1,
        }
    }
}

/// Set recall, precision and F1. An empty prediction scores zero everywhere.
pub fn score_against_reference<S: AsRef<str>>(
    reference: &[S],
    predicted: &[S],
) -> Result<Scores, EvalError> {
    let r: BTreeSet<&str> = reference.iter().map(AsRef::as_ref).collect();
    let p: BTreeSet<&str> = predicted.iter().map(AsRef::as_ref).collect();
    if r.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let hit = r.intersection(&p).count() as f64;
    let precision = if p.is_empty() {
        0.0
    } else {
        hit / p.len() as f64
    };
    Ok(Scores::from_pr(hit / r.len() as f64, precision))
}

/// Derivation records indexed by derived id, plus the set of clean bases.
#[derive(Debug, Clone, Default)]
pub struct LineageStore {
    records: BTreeMap<String, LineageRecord>,
    bases: BTreeSet<String>,
}

impl LineageStore {
    /// With no explicit bases, every parent that is not itself derived is one.
    pub fn new(records: Vec<LineageRecord>, bases: impl IntoIterator<Item = String>) -> Self {
        let records: BTreeMap<String, LineageRecord> = records
            .into_iter()
            .map(|r| (r.derived_table_id.clone(), r))
            .collect();
        let mut bases: BTreeSet<String> = bases.into_iter().collect();
        if bases.is_empty() {
            bases = records
                .values()
                .map(|r| r.base_table_id.clone())
                .filter(|b| !records.contains_key(b))
                .collect();
        }
        Self { records, bases }
    }

    pub fn record(&self, id: &str) -> Option<&LineageRecord> {
        self.records.get(id)
    }

    pub fn is_base(&self, id: &str) -> bool {
        self.bases.contains(id)
    }

    pub fn bases(&self) -> &BTreeSet<String> {
        &self.bases
    }

    pub fn records(&self) -> impl Iterator<Item = &LineageRecord> {
        self.records.values()
    }

    /// Records from `id` up to its clean base, nearest first, and the base id.
    pub fn chain(&self, id: &str) -> Result<(Vec<&LineageRecord>, String), EvalError> {
        let mut out = Vec::new();
        let mut cur = id.to_string();
        loop {
            match self.records.get(&cur) {
                Some(r) => {
                    if out.len() > self.records.len() {
                        return Err(EvalError::LineageCycle(id.to_string()));
                    }
                    out.push(r);
                    cur = r.base_table_id.clone();
                }
                None if out.is_empty() && !self.bases.contains(&cur) => {
                    return Err(EvalError::UnknownLineage(id.to_string()))
                }
                None => return Ok((out, cur)),
            }
        }
    }
}

/// Compares a cell-level value from lineage with a SQL literal: trimmed,
/// case-insensitive, numerically when both parse.
pub fn values_match(a: &str, b: &str) -> bool {
    let (a, b) = (a.trim(), b.trim());
    match (parse_finite(a), parse_finite(b)) {
        (Some(x), Some(y)) => x == y,
        _ => a.to_lowercase() == b.to_lowercase(),
    }
}

fn constraint_matches(c: &ColumnConstraint, base: &str, column: &str, value: Option<&str>) -> bool {
    c.table
        .as_deref()
        .is_none_or(|t| t.eq_ignore_ascii_case(base))
        && c.column.eq_ignore_ascii_case(column)
        && value.is_some_and(|v| values_match(v, &c.value))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    /// The table's clean ancestor is not one of the query's tables.
    WrongBase { base: String },
    /// A derivation step injected noise.
    Noise { operation: Operation },
    /// A partition step does not match any filter in the query.
    PartitionMismatch {
        column: String,
        value: Option<String>,
    },
    /// Reference protocol: not in the reference set.
    NotInReference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableVerdict {
    pub table_id: String,
    pub base_table: Option<String>,
    pub correct: bool,
    pub reasons: Vec<Reason>,
}

/// How required units are counted for recall in lineage mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallDenominator {
    /// One unit per query table, except a table that the lake splits on a
    /// filtered column counts one unit per matching partition value.
    #[default]
    PerPartition,
    /// One unit per query table.
    PerBase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub verdicts: Vec<TableVerdict>,
    pub required_units: usize,
    pub covered_units: usize,
    pub scores: Scores,
}

fn base_in_spec<'a>(spec: &'a GoldQuerySpec, base: &str) -> Option<&'a str> {
    spec.base_tables
        .iter()
        .find(|b| b.eq_ignore_ascii_case(base))
        .map(String::as_str)
}

/// Checks one predicted table against the three lineage conditions.
pub fn verify_table(
    id: &str,
    spec: &GoldQuerySpec,
    lineage: &LineageStore,
) -> Result<TableVerdict, EvalError> {
    let (chain, base) = lineage.chain(id)?;
    let mut reasons = Vec::new();
    if base_in_spec(spec, &base).is_none() {
        reasons.push(Reason::WrongBase { base: base.clone() });
    }
    for r in &chain {
        if r.operation.is_noise() {
            reasons.push(Reason::Noise {
                operation: r.operation,
            });
        }
    }
    for r in &chain {
        if let Some((column, value)) = r.partition_key() {
            if !spec
                .value_constraints
                .iter()
                .any(|c| constraint_matches(c, &base, column, value))
            {
                reasons.push(Reason::PartitionMismatch {
                    column: column.to_string(),
                    value: value.map(str::to_string),
                });
            }
        }
    }
    Ok(TableVerdict {
        table_id: id.to_string(),
        base_table: Some(base),
        correct: reasons.is_empty(),
        reasons,
    })
}

/// Partition `(column, value)` pairs of `base` that satisfy some filter.
fn matching_partitions(
    spec: &GoldQuerySpec,
    base: &str,
    lineage: &LineageStore,
) -> BTreeSet<(String, String)> {
    lineage
        .records()
        .filter(|r| r.base_table_id == base)
        .filter_map(|r| r.partition_key())
        .filter(|(c, v)| {
            spec.value_constraints
                .iter()
                .any(|k| constraint_matches(k, base, c, *v))
        })
        .map(|(c, v)| (c.to_string(), v.unwrap_or_default().to_string()))
        .collect()
}

/// Scores a prediction under the lineage protocol.
pub fn verify_selection<S: AsRef<str>>(
    predicted: &[S],
    spec: &GoldQuerySpec,
    lineage: &LineageStore,
    denominator: RecallDenominator,
) -> Result<Verification, EvalError> {
    let mut seen = BTreeSet::new();
    let ids: Vec<&str> = predicted
        .iter()
        .map(AsRef::as_ref)
        .filter(|id| seen.insert(*id))
        .collect();
    let verdicts: Vec<TableVerdict> = ids
        .iter()
        .map(|id| verify_table(id, spec, lineage))
        .collect::<Result<_, _>>()?;

    // Which unit each correct prediction covers: a whole base, or one partition.
    let mut whole: BTreeSet<String> = BTreeSet::new();
    let mut parts: BTreeSet<(String, String, String)> = BTreeSet::new();
    for v in verdicts.iter().filter(|v| v.correct) {
        let (chain, base) = lineage.chain(&v.table_id)?;
        let key = base_in_spec(spec, &base).unwrap_or(&base).to_string();
        match chain.iter().rev().find_map(|r| r.partition_key()) {
            Some((c, val)) => {
                parts.insert((key, c.to_string(), val.unwrap_or_default().to_string()));
            }
            None => {
                whole.insert(key);
            }
        }
    }

    let mut required = 0usize;
    let mut covered = 0usize;
    for base in &spec.base_tables {
        // Lineage ids use the lake's spelling; the query may differ in case.
        let lake_base = lineage
            .bases()
            .iter()
            .find(|b| b.eq_ignore_ascii_case(base))
            .cloned()
            .unwrap_or_else(|| base.clone());
        let units = match denominator {
            RecallDenominator::PerBase => BTreeSet::new(),
            RecallDenominator::PerPartition => matching_partitions(spec, &lake_base, lineage),
        };
        if units.is_empty() {
            required += 1;
            if whole.contains(base) || parts.iter().any(|(b, _, _)| b == base) {
                covered += 1;
            }
        } else {
            required += units.len();
            covered += if whole.contains(base) {
                units.len()
            } else {
                units
                    .iter()
                    .filter(|(c, v)| parts.contains(&(base.clone(), c.clone(), v.clone())))
                    .count()
            };
        }
    }
    let correct = verdicts.iter().filter(|v| v.correct).count();
    let recall = if required == 0 {
        0.0
    } else {
        covered as f64 / required as f64
    };
    let precision = if ids.is_empty() {
        0.0
    } else {
        correct as f64 / ids.len() as f64
    };
    Ok(Verification {
        verdicts,
        required_units: required,
        covered_units: covered,
        scores: Scores::from_pr(recall, precision),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCategory {
    Clean,
    Stg,
    Test,
    Subset,
    Dups,
    BrokenFk,
    Nulls,
    PartitionMismatch,
}

impl NoiseCategory {
    pub const ALL: [NoiseCategory; 8] = [
        NoiseCategory::Clean,
        NoiseCategory::Stg,
        NoiseCategory::Test,
        NoiseCategory::Subset,
        NoiseCategory::Dups,
        NoiseCategory::BrokenFk,
        NoiseCategory::Nulls,
        NoiseCategory::PartitionMismatch,
    ];

    fn of(op: Operation) -> Option<Self> {
        Some(match op {
            Operation::Partition | Operation::Prod => return None,
            Operation::StgDuprows | Operation::StgNulls => NoiseCategory::Stg,
            Operation::TestSample => NoiseCategory::Test,
            Operation::Subset => NoiseCategory::Subset,
            Operation::Dups => NoiseCategory::Dups,
            Operation::BrokenFk => NoiseCategory::BrokenFk,
            Operation::Nulls => NoiseCategory::Nulls,
        })
    }

    pub fn slug(self) -> &'static str {
        match self {
            NoiseCategory::Clean => "clean",
            NoiseCategory::Stg => "_stg",
            NoiseCategory::Test => "_test",
            NoiseCategory::Subset => "_subset",
            NoiseCategory::Dups => "_dups",
            NoiseCategory::BrokenFk => "_broken_fk",
            NoiseCategory::Nulls => "_nulls",
            NoiseCategory::PartitionMismatch => "partition-mismatch",
        }
    }
}

/// Category of one selected table. The nearest noise step wins; partition
/// mismatch is only judged when a gold query is given.
pub fn classify(
    id: &str,
    spec: Option<&GoldQuerySpec>,
    lineage: &LineageStore,
) -> Result<NoiseCategory, EvalError> {
    let (chain, base) = lineage.chain(id)?;
    if let Some(cat) = chain.iter().find_map(|r| NoiseCategory::of(r.operation)) {
        return Ok(cat);
    }
    if let Some(spec) = spec {
        let mismatch = chain
            .iter()
            .filter_map(|r| r.partition_key())
            .any(|(c, v)| {
                !spec
                    .value_constraints
                    .iter()
                    .any(|k| constraint_matches(k, &base, c, v))
            });
        if mismatch {
            return Ok(NoiseCategory::PartitionMismatch);
        }
    }
    Ok(NoiseCategory::Clean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDistribution {
    pub total: usize,
    /// Selected ids missing from lineage; not part of `total`.
    pub unclassified: usize,
    pub counts: BTreeMap<String, usize>,
    /// Percent of `total`, two decimals; all zero when nothing was selected.
    pub percentages: BTreeMap<String, f64>,
}

/// Share of each table kind across many selections.
pub fn noise_distribution<'a, I>(selections: I, lineage: &LineageStore) -> NoiseDistribution
where
    I: IntoIterator<Item = (&'a [String], Option<&'a GoldQuerySpec>)>,
{
    let mut counts: BTreeMap<NoiseCategory, usize> =
        NoiseCategory::ALL.iter().map(|c| (*c, 0)).collect();
    let mut unclassified = 0;
    for (tables, spec) in selections {
        for id in tables {
            match classify(id, spec, lineage) {
                Ok(c) => *counts.entry(c).or_default() += 1,
                Err(_) => unclassified += 1,
            }
        }
    }
    let total: usize = counts.values().sum();
    let pct = |n: usize| {
        if total == 0 {
            0.0
        } else {
            (n as f64 * 10000.0 / total as f64).round() / 100.0
        }
    };
    NoiseDistribution {
        total,
        unclassified,
        counts: counts
            .iter()
            .map(|(c, n)| (c.slug().to_string(), *n))
            .collect(),
        percentages: counts
            .iter()
            .map(|(c, n)| (c.slug().to_string(), pct(*n)))
            .collect(),
    }
}

/// One line of a task file. Either `gold_sql` or `ref_tables` is expected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalTask {
    pub task_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sql: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_tables: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

pub fn load_tasks(path: &Path) -> Result<Vec<EvalTask>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let mut tasks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: EvalTask = serde_json::from_str(line).map_err(|e| EvalError::BadTask {
            line: i + 1,
            reason: e.to_string(),
        })?;
        tasks.push(t);
    }
    Ok(tasks)
}

/// Recall of the top-`k` baseline hits against each task's reference set,
/// averaged per domain (in percent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub index_kind: String,
    pub k: usize,
    pub per_domain: BTreeMap<String, f64>,
    pub overall: f64,
}

pub fn recall_at_k(
    index: &VectorIndex,
    embedder: &dyn Embedder,
    tasks: &[EvalTask],
    ks: &[usize],
    max_distance: f64,
) -> Result<Vec<RecallRow>, EvalError> {
    let with_ref: Vec<&EvalTask> = tasks
        .iter()
        .filter(|t| t.ref_tables.as_ref().is_some_and(|r| !r.is_empty()))
        .collect();
    let kmax = ks.iter().copied().max().unwrap_or(1).max(1);
    let params = SearchParams {
        k: kmax,
        max_distance,
    };
    let ranked: Vec<Vec<String>> = with_ref
        .par_iter()
        .map(|t| {
            baseline_topk(index, embedder, &t.question, &params, None)
                .map(|hits| hits.into_iter().map(|h| h.table_id).collect())
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for &k in ks {
        let mut per: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (t, hits) in with_ref.iter().zip(&ranked) {
            let reference = t.ref_tables.as_deref().unwrap_or_default();
            let top: Vec<&str> = hits.iter().take(k).map(String::as_str).collect();
            let refs: Vec<&str> = reference.iter().map(String::as_str).collect();
            let r = score_against_reference(&refs, &top)?.recall;
            per.entry(t.domain.clone().unwrap_or_else(|| "default".into()))
                .or_default()
                .push(r);
        }
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                100.0 * v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let all: Vec<f64> = per.values().flatten().copied().collect();
        rows.push(RecallRow {
            index_kind: index.kind.slug().to_string(),
            k,
            per_domain: per.iter().map(|(d, v)| (d.clone(), mean(v))).collect(),
            overall: mean(&all),
        });
    }
    Ok(rows)
}

/// CSV with one row per (index kind, k) and one column per domain.
pub fn write_recall_csv(rows: &[RecallRow], path: &Path) -> Result<(), EvalError> {
    let domains: BTreeSet<&String> = rows.iter().flat_map(|r| r.per_domain.keys()).collect();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["index_kind".to_string(), "k".to_string()];
    header.extend(domains.iter().map(|d| d.to_string()));
    header.push("overall".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.index_kind.clone(), r.k.to_string()];
        rec.extend(domains.iter().map(|d| {
            r.per_domain
                .get(*d)
                .map_or(String::new(), |v| format!("{v:.2}"))
        }));
        rec.push(format!("{:.2}", r.overall));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Score against `ref_tables`.
    Reference,
    /// Verify against `gold_sql` through lineage.
    Lineage,
}

/// Tables chosen for one task and how many agent steps it took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub tables: Vec<String>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub task_id: String,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub steps: usize,
    pub verdicts: Vec<TableVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTask {
    pub task_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mode: EvalMode,
    pub recall_denominator: RecallDenominator,
    pub tasks_scored: usize,
    pub tasks_skipped: Vec<SkippedTask>,
    pub macro_recall: f64,
    pub macro_precision: f64,
    pub macro_f1: f64,
    pub mean_steps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_distribution: Option<NoiseDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ScoreRow>,
    pub summary: EvalSummary,
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Scores every task that has a prediction; rows come back sorted by id.
pub fn evaluate(
    tasks: &[EvalTask],
    predictions: &BTreeMap<String, Prediction>,
    mode: EvalMode,
    lineage: Option<&LineageStore>,
    denominator: RecallDenominator,
) -> EvalReport {
    enum Out {
        Row(ScoreRow, Option<GoldQuerySpec>, Vec<String>),
        Skip(SkippedTask),
    }
    let skip = |t: &EvalTask, reason: String| {
        log::warn!("skipping task {}: {reason}", t.task_id);
        Out::Skip(SkippedTask {
            task_id: t.task_id.clone(),
            reason,
        })
    };
    let outs: Vec<Out> = tasks
        .par_iter()
        .map(|t| {
            let Some(pred) = predictions.get(&t.task_id) else {
                return skip(t, "no prediction".into());
            };
            match mode {
                EvalMode::Reference => {
                    let Some(reference) = t.ref_tables.as_ref() else {
                        return skip(t, "no ref_tables".into());
                    };
                    match score_against_reference(reference, &pred.tables) {
                        Ok(s) => {
                            let verdicts = pred
                                .tables
                                .iter()
                                .map(|id| {
                                    let ok = reference.contains(id);
                                    TableVerdict {
                                        table_id: id.clone(),
                                        base_table: None,
                                        correct: ok,
                                        reasons: if ok {
                                            vec![]
                                        } else {
                                            vec![Reason::NotInReference]
                                        },
                                    }
                                })
                                .collect();
                            Out::Row(
                                ScoreRow {
                                    task_id: t.task_id.clone(),
                                    recall: round6(s.recall),
                                    precision: round6(s.precision),
                                    f1: round6(s.f1),
                                    steps: pred.steps,
                                    verdicts,
                                },
                                None,
                                pred.tables.clone(),
                            )
                        }
                        Err(e) => skip(t, e.to_string()),
                    }
                }
                EvalMode::Lineage => {
                    let Some(sql) = t.gold_sql.as_deref() else {
                        return skip(t, "no gold_sql".into());
                    };
                    let Some(lineage) = lineage else {
                        return skip(t, "no lineage available".into());
                    };
                    let spec = match parse_gold_sql(&t.question, sql) {
                        Ok(s) => s,
                        Err(e) => return skip(t, e.to_string()),
                    };
                    match verify_selection(&pred.tables, &spec, lineage, denominator) {
                        Ok(v) => Out::Row(
                            ScoreRow {
                                task_id: t.task_id.clone(),
                                recall: round6(v.scores.recall),
                                precision: round6(v.scores.precision),
                                f1: round6(v.scores.f1),
                                steps: pred.steps,
                                verdicts: v.verdicts,
                            },
                            Some(spec),
                            pred.tables.clone(),
                        ),
                        Err(e) => skip(t, e.to_string()),
                    }
                }
            }
        })
        .collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut selections: Vec<(Vec<String>, Option<GoldQuerySpec>)> = Vec::new();
    for o in outs {
        match o {
            Out::Row(r, spec, tables) => {
                rows.push(r);
                selections.push((tables, spec));
            }
            Out::Skip(s) => skipped.push(s),
        }
    }
    rows.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    skipped.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let n = rows.len();
    let mean = |f: &dyn Fn(&ScoreRow) -> f64| {
        if n == 0 {
            0.0
        } else {
            round6(rows.iter().map(f).sum::<f64>() / n as f64)
        }
    };
    let noise = lineage.map(|l| {
        noise_distribution(
            selections.iter().map(|(t, s)| (t.as_slice(), s.as_ref())),
            l,
        )
    });
    let summary = EvalSummary {
        mode,
        recall_denominator: denominator,
        tasks_scored: n,
        tasks_skipped: skipped,
        macro_recall: mean(&|r| r.recall),
        macro_precision: mean(&|r| r.precision),
        macro_f1: mean(&|r| r.f1),
        mean_steps: mean(&|r| r.steps as f64),
        noise_distribution: noise,
    };
    EvalReport { rows, summary }
}

/// `task_id,recall,precision,f1,steps`.
pub fn write_scores_csv(rows: &[ScoreRow], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["task_id", "recall", "precision", "f1", "steps"])?;
    for r in rows {
        w.write_record([
            r.task_id.clone(),
            format!("{:.4}", r.recall),
            format!("{:.4}", r.precision),
            format!("{:.4}", r.f1),
            r.steps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_json(summary: &EvalSummary, path: &Path) -> Result<(), EvalError> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, summary)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn rec(derived: &str, parent: &str, op: Operation, params: &[(&str, &str)]) -> LineageRecord {
        LineageRecord {
            derived_table_id: derived.into(),
            base_table_id: parent.into(),
            operation: op,
            params: params
                .iter()
                .map(|(k, v)| (k.to_string(), json!(v)))
                .collect(),
            human_note: String::new(),
        }
    }

    fn bank_lineage() -> LineageStore {
        LineageStore::new(
            vec![
                rec(
                    "district_A3_east_bohemia",
                    "district",
                    Operation::Partition,
                    &[("column", "A3"), ("value", "east Bohemia")],
                ),
                rec(
                    "district_A3_prague",
                    "district",
                    Operation::Partition,
                    &[("column", "A3"), ("value", "Prague")],
                ),
                rec(
                    "district_A3_east_bohemia_prod",
                    "district_A3_east_bohemia",
                    Operation::Prod,
                    &[],
                ),
                rec(
                    "district_A3_east_bohemia_stg",
                    "district_A3_east_bohemia",
                    Operation::StgDuprows,
                    &[],
                ),
                rec("district_prod", "district", Operation::Prod, &[]),
                rec("district_subset", "district", Operation::Subset, &[]),
                rec(
                    "card_type_gold",
                    "card",
                    Operation::Partition,
                    &[("column", "type"), ("value", "gold")],
                ),
                rec(
                    "card_type_classic",
                    "card",
                    Operation::Partition,
                    &[("column", "type"), ("value", "classic")],
                ),
                rec("loan_nulls", "loan", Operation::Nulls, &[]),
            ],
            [
                "district".to_string(),
                "card".to_string(),
                "loan".to_string(),
                "account".to_string(),
            ],
        )
    }

    fn spec(sql: &str) -> GoldQuerySpec {
        parse_gold_sql("q", sql).unwrap()
    }

    #[test]
    fn reference_scores() {
        let s = score_against_reference(&["A", "B"], &["A", "B"]).unwrap();
        assert_eq!((s.recall, s.precision, s.f1), (1.0, 1.0, 1.0));
        let s = score_against_reference(&["A", "B"], &["A", "C"]).unwrap();
        assert_eq!((s.recall, s.precision, s.f1), (0.5, 0.5, 0.5));
        let s = score_against_reference(&["A", "B"], &[]).unwrap();
        assert_eq!((s.recall, s.precision, s.f1), (0.0, 0.0, 0.0));
        assert!(matches!(
            score_against_reference::<&str>(&[], &["A"]),
            Err(EvalError::EmptyReference)
        ));
    }

    #[test]
    fn worked_example_is_correct() {
        let l = bank_lineage();
        let s = spec("SELECT * FROM district WHERE A3 = 'East Bohemia'");
        let v = verify_selection(
            &["district_A3_east_bohemia_prod"],
            &s,
            &l,
            RecallDenominator::PerPartition,
        )
        .unwrap();
        assert!(v.verdicts[0].correct);
        assert_eq!((v.required_units, v.covered_units), (1, 1));
        assert_eq!(v.scores.f1, 1.0);
    }

    #[test]
    fn each_condition_flips_the_verdict() {
        let l = bank_lineage();
        let s = spec("SELECT * FROM district WHERE A3 = 'East Bohemia'");
        let verdict = |id: &str| verify_table(id, &s, &l).unwrap();
        assert!(verdict("district_A3_east_bohemia").correct);
        // Condition 1: other base.
        let v = verify_table("account", &s, &l).unwrap();
        assert_eq!(
            v.reasons,
            [Reason::WrongBase {
                base: "account".into()
            }]
        );
        // Condition 2: noise in the chain.
        assert_eq!(
            verdict("district_A3_east_bohemia_stg").reasons,
            [Reason::Noise {
                operation: Operation::StgDuprows
            }]
        );
        assert_eq!(
            verdict("district_subset").reasons,
            [Reason::Noise {
                operation: Operation::Subset
            }]
        );
        // Condition 3: partition on another value.
        assert_eq!(
            verdict("district_A3_prague").reasons,
            [Reason::PartitionMismatch {
                column: "A3".into(),
                value: Some("Prague".into())
            }]
        );
        let cards = spec("SELECT * FROM card WHERE type = 'classic'");
        assert!(!verify_table("card_type_gold", &cards, &l).unwrap().correct);
        assert!(
            verify_table("card_type_classic", &cards, &l)
                .unwrap()
                .correct
        );
        assert!(matches!(
            verify_table("nope", &s, &l),
            Err(EvalError::UnknownLineage(_))
        ));
    }

    #[test]
    fn partition_denominator() {
        let l = bank_lineage();
        let s = spec("SELECT * FROM district WHERE A3 IN ('East Bohemia', 'Prague')");
        let one = verify_selection(
            &["district_A3_prague"],
            &s,
            &l,
            RecallDenominator::PerPartition,
        )
        .unwrap();
        assert_eq!((one.required_units, one.covered_units), (2, 1));
        assert_eq!(one.scores.recall, 0.5);
        let base =
            verify_selection(&["district_prod"], &s, &l, RecallDenominator::PerPartition).unwrap();
        assert_eq!(base.covered_units, 2);
        let per_base =
            verify_selection(&["district_A3_prague"], &s, &l, RecallDenominator::PerBase).unwrap();
        assert_eq!((per_base.required_units, per_base.covered_units), (1, 1));
        let empty = verify_selection::<&str>(&[], &s, &l, RecallDenominator::PerPartition).unwrap();
        assert_eq!(empty.scores.f1, 0.0);
    }

    #[test]
    fn noise_shares() {
        let l = bank_lineage();
        let clean = vec!["district".to_string(), "card_type_gold".to_string()];
        let d = noise_distribution([(clean.as_slice(), None)], &l);
        assert_eq!(d.percentages["clean"], 100.0);
        let mixed = vec![
            "district".to_string(),
            "district_prod".to_string(),
            "district_A3_east_bohemia_prod".to_string(),
            "loan_nulls".to_string(),
        ];
        let d = noise_distribution([(mixed.as_slice(), None)], &l);
        assert_eq!(
            (d.percentages["clean"], d.percentages["_nulls"]),
            (75.0, 25.0)
        );
        let s = spec("SELECT * FROM card WHERE type = 'classic'");
        let picks = vec!["card_type_gold".to_string(), "ghost".to_string()];
        let d = noise_distribution([(picks.as_slice(), Some(&s))], &l);
        assert_eq!(d.percentages["partition-mismatch"], 100.0);
        assert_eq!(d.unclassified, 1);
        let sum: f64 = d.percentages.values().sum();
        assert!((sum - 100.0).abs() <= 0.1);
    }

    #[test]
    fn harness_rows_and_skips() {
        let l = bank_lineage();
        let tasks = vec![
            EvalTask {
                task_id: "b".into(),
                question: "q".into(),
                gold_sql: Some("SELECT * FROM district WHERE A3 = 'East Bohemia'".into()),
                ref_tables: None,
                domain: None,
            },
            EvalTask {
                task_id: "a".into(),
                question: "q".into(),
                gold_sql: Some("SELECT * FROM t WHERE x IN (SELECT 1)".into()),
                ref_tables: None,
                domain: None,
            },
        ];
        let preds: BTreeMap<String, Prediction> = [
            (
                "a".to_string(),
                Prediction {
                    tables: vec!["district".into()],
                    steps: 2,
                },
            ),
            (
                "b".to_string(),
                Prediction {
                    tables: vec![
                        "district_A3_east_bohemia_prod".into(),
                        "district_subset".into(),
                    ],
                    steps: 4,
                },
            ),
        ]
        .into();
        let r = evaluate(
            &tasks,
            &preds,
            EvalMode::Lineage,
            Some(&l),
            RecallDenominator::PerPartition,
        );
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].precision, 0.5);
        assert_eq!(r.summary.tasks_skipped[0].task_id, "a");
        assert!(r.summary.tasks_skipped[0].reason.contains("subquery"));
        assert_eq!(
            r.summary.noise_distribution.unwrap().percentages["_subset"],
            50.0
        );
    }

    proptest! {
        #[test]
        fn scores_match_set_oracle(
            r in proptest::collection::btree_set(0u8..20, 1..20),
            p in proptest::collection::btree_set(0u8..20, 0..20),
        ) {
            let name = |x: &u8| format!("t{x}");
            let rv: Vec<String> = r.iter().map(name).collect();
            let pv: Vec<String> = p.iter().rev().map(name).collect();
            let s = score_against_reference(&rv, &pv).unwrap();
            let inter = r.intersection(&p).count() as f64;
            let recall = inter / r.len() as f64;
            let precision = if p.is_empty() { 0.0 } else { inter / p.len() as f64 };
            let f1 = if recall + precision == 0.0 { 0.0 } else { 2.0 * recall * precision / (recall + precision) };
            prop_assert_eq!(s, Scores { recall, precision, f1 });
            let mut rev = rv.clone();
            rev.reverse();
            prop_assert_eq!(score_against_reference(&rev, &pv).unwrap(), s);
        }
    }
}
