//! Vector index over table texts, exact cosine top-K retrieval with a
//! distance threshold, and the per-session dedup map that suppresses tables
//! already shown to the agent.

mod index;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use index::{IndexEntry, IndexKind, VectorIndex};

use crate::catalog::{CatalogError, CatalogStore, TableEntry};
use crate::descriptor::TableDescriptor;
use crate::providers::{
    cosine_distance, fnv1a64, tokenize, Embedder, EmbeddingVector, ProviderError,
};
use crate::table::TableData;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_MAX_DISTANCE: f64 = 0.7;
/// Threshold for the hashing embedder, whose distances for relevant tables sit around 0.7 to 0.85.
pub const LOCAL_MAX_DISTANCE: f64 = 0.9;
pub const SAMPLE_ROWS: usize = 3;
pub const TERMINATION_NOTICE: &str = "NO NEW TABLES — revise your search strategy.";

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("empty query")]
    EmptyQuery,
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("table {0} indexed twice")]
    DuplicateId(String),
    #[error("no descriptor for table {0}")]
    MissingDescriptor(String),
    #[error("invalid search parameters: {0}")]
    InvalidParams(String),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    pub k: usize,
    pub max_distance: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            max_distance: DEFAULT_MAX_DISTANCE,
        }
    }
}

impl SearchParams {
    fn validate(&self) -> Result<(), SearchError> {
        if self.k == 0 {
            return Err(SearchError::InvalidParams("k must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.max_distance) {
            return Err(SearchError::InvalidParams(format!(
                "max_distance {} outside [0, 2]",
                self.max_distance
            )));
        }
        Ok(())
    }
}

/// Name, columns and up to three sampled rows, drawn with a stream keyed by
/// the seed and the table id.
pub fn schema_only_text(entry: &TableEntry, data: &TableData, seed: u64) -> String {
    let mut out = format!(
        "Table: {}\nColumns: {}\nSample rows:",
        entry.name,
        entry.column_names().join(", ")
    );
    let n = data.rows.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(entry.table_id.as_bytes()));
    let mut picks = sample(&mut rng, n, SAMPLE_ROWS.min(n)).into_vec();
    picks.sort_unstable();
    for i in picks {
        let cells: Vec<&str> = data.rows[i]
            .iter()
            .map(|c| c.as_deref().unwrap_or(""))
            .collect();
        out.push('\n');
        out.push_str(&cells.join(" | "));
    }
    out
}

/// `(table_id, text)` pairs to embed for `kind`, ordered by id.
pub fn index_texts(
    kind: IndexKind,
    catalog: &CatalogStore,
    descriptors: &[TableDescriptor],
    seed: u64,
) -> Result<Vec<(String, String)>, SearchError> {
    match kind {
        IndexKind::SchemaOnly => {
            let entries: Vec<&TableEntry> = catalog.entries.values().collect();
            entries
                .par_iter()
                .map(|e| {
                    let data = catalog.read_table(e)?;
                    Ok((e.table_id.clone(), schema_only_text(e, &data, seed)))
                })
                .collect()
        }
        IndexKind::Content | IndexKind::Discriminative => {
            let by_id: BTreeMap<&str, &TableDescriptor> = descriptors
                .iter()
                .map(|d| (d.table_id.as_str(), d))
                .collect();
            catalog
                .ids()
                .map(|id| {
                    let d = by_id
                        .get(id)
                        .ok_or_else(|| SearchError::MissingDescriptor(id.to_string()))?;
                    let text = if kind == IndexKind::Content {
                        &d.content_summary
                    } else {
                        &d.discriminative_description
                    };
                    Ok((id.to_string(), text.clone()))
                })
                .collect()
        }
    }
}

pub fn build_index(
    texts: &[(String, String)],
    kind: IndexKind,
    embedder: &dyn Embedder,
) -> Result<VectorIndex, SearchError> {
    let dims = embedder.dims();
    let entries: Vec<IndexEntry> = texts
        .par_iter()
        .map(|(id, text)| {
            let vector = embedder.embed(text)?;
            if vector.dims() != dims {
                return Err(SearchError::DimensionMismatch {
                    expected: dims,
                    got: vector.dims(),
                });
            }
            Ok(IndexEntry {
                table_id: id.clone(),
                vector,
            })
        })
        .collect::<Result<_, SearchError>>()?;
    VectorIndex::new(kind, dims, entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub table_id: String,
    pub distance: f64,
}

/// Exact scan: every entry within `max_distance`, by distance then id, first `k`.
pub fn rank(index: &VectorIndex, query: &EmbeddingVector, k: usize, max_distance: f64) -> Vec<Hit> {
    let mut hits: Vec<Hit> = index
        .entries()
        .iter()
        .map(|e| Hit {
            table_id: e.table_id.clone(),
            distance: cosine_distance(query, &e.vector),
        })
        .filter(|h| h.distance <= max_distance)
        .collect();
    hits.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.table_id.cmp(&b.table_id))
    });
    hits.truncate(k);
    hits
}

fn embed_query(embedder: &dyn Embedder, query: &str) -> Result<EmbeddingVector, SearchError> {
    if query.trim().is_empty() {
        return Err(SearchError::EmptyQuery);
    }
    match embedder.embed(query) {
        Err(ProviderError::EmptyText) => Err(SearchError::EmptyQuery),
        other => Ok(other?),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchSession {
    pub session_id: String,
    /// Occurrence count per surfaced table.
    pub seen: BTreeMap<String, u32>,
    pub query_log: Vec<String>,
}

impl SearchSession {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub rendered: String,
    pub new_ids: Vec<String>,
    pub duplicate_ids: Vec<String>,
    pub terminated: bool,
}

/// Renders the block shown for a table on its first appearance.
pub fn render_block(
    descriptors: &BTreeMap<String, TableDescriptor>,
    table_id: &str,
    attached: bool,
) -> String {
    match descriptors.get(table_id) {
        Some(d) if attached => format!("Table ID: {table_id}\n{}", d.content_summary),
        Some(d) => format!("Table ID: {table_id}\n{}", d.discriminative_description),
        None => format!("Table ID: {table_id}"),
    }
}

/// Session-aware search. New tables get their full block via `render`;
/// repeats get a one-line recurrence marker. An all-repeat result appends the
/// termination notice.
pub fn search(
    index: &VectorIndex,
    embedder: &dyn Embedder,
    session: &mut SearchSession,
    query: &str,
    params: &SearchParams,
    render: &dyn Fn(&str) -> String,
) -> Result<SearchResult, SearchError> {
    params.validate()?;
    let q = embed_query(embedder, query)?;
    if q.dims() != index.dims() {
        return Err(SearchError::DimensionMismatch {
            expected: index.dims(),
            got: q.dims(),
        });
    }
    session.query_log.push(query.to_string());
    let hits = rank(index, &q, params.k, params.max_distance);
    let mut blocks = Vec::with_capacity(hits.len() + 1);
    let mut new_ids = Vec::new();
    let mut duplicate_ids = Vec::new();
    for h in &hits {
        let count = session.seen.entry(h.table_id.clone()).or_insert(0);
        *count += 1;
        if *count == 1 {
            blocks.push(render(&h.table_id));
            new_ids.push(h.table_id.clone());
        } else {
            blocks.push(format!(
                "Table ID: {} (Appeared {} times)",
                h.table_id, count
            ));
            duplicate_ids.push(h.table_id.clone());
        }
    }
    let terminated = !hits.is_empty() && new_ids.is_empty();
    if terminated {
        blocks.push(TERMINATION_NOTICE.to_string());
    }
    Ok(SearchResult {
        rendered: blocks.join("\n\n"),
        new_ids,
        duplicate_ids,
        terminated,
    })
}

fn overlap(query_tokens: &BTreeSet<String>, text: &str) -> usize {
    let tokens: BTreeSet<String> = tokenize(text).into_iter().collect();
    query_tokens.intersection(&tokens).count()
}

/// Stateless ranked retrieval for the vector-search baseline. With `rerank`
/// texts, passing candidates are re-sorted by lowercase token overlap with
/// the query before truncation; distance then id break ties.
pub fn baseline_topk(
    index: &VectorIndex,
    embedder: &dyn Embedder,
    query: &str,
    params: &SearchParams,
    rerank: Option<&BTreeMap<String, String>>,
) -> Result<Vec<Hit>, SearchError> {
    params.validate()?;
    let q = match embed_query(embedder, query) {
        Err(SearchError::EmptyQuery) => return Ok(Vec::new()),
        other => other?,
    };
    let Some(texts) = rerank else {
        return Ok(rank(index, &q, params.k, params.max_distance));
    };
    let qt: BTreeSet<String> = tokenize(query).into_iter().collect();
    let mut scored: Vec<(usize, Hit)> = rank(index, &q, usize::MAX, params.max_distance)
        .into_iter()
        .map(|h| (texts.get(&h.table_id).map_or(0, |t| overlap(&qt, t)), h))
        .collect();
    scored.sort_by(|(oa, a), (ob, b)| {
        ob.cmp(oa)
            .then_with(|| a.distance.total_cmp(&b.distance))
            .then_with(|| a.table_id.cmp(&b.table_id))
    });
    Ok(scored.into_iter().take(params.k).map(|(_, h)| h).collect())
}
