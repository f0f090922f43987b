//! Metadata reasoning over data lakes: catalog ingestion, profiling, table
//! descriptors, vector search, on-demand tools, an agent loop that selects a
//! sufficient set of tables, a synthetic messy-lake generator and the
//! evaluation harness.

pub mod agent;
pub mod artifacts;
pub mod catalog;
pub mod descriptor;
pub mod evalkit;
pub mod pipeline;
pub mod profiler;
pub mod providers;
pub mod search;
pub mod synthlake;
pub mod table;
pub mod tools;

pub use agent::{AgentAction, ConstraintSet, SelectionResult};
pub use catalog::{CatalogStore, ColumnSpec, ColumnType, TableEntry};
pub use descriptor::TableDescriptor;
pub use evalkit::{GoldQuerySpec, ScoreRow};
pub use profiler::{ColumnProfile, TableProfile};
pub use providers::{Embedder, EmbeddingVector, TextGenerator};
pub use search::{IndexKind, VectorIndex};
pub use synthlake::{LineageRecord, SynthConfig};
pub use table::TableData;
pub use tools::{ColumnRef, FindReport, JoinabilityReport};
