//! In-memory ingest, profile and describe chain over a lake directory.

use std::collections::BTreeMap;
use std::path::Path;

use crate::catalog::{ingest_lake, CatalogError, CatalogStore, IngestOptions};
use crate::descriptor::{describe_catalog, DescriptorError, TableDescriptor};
use crate::profiler::{profile_catalog, ProfileError, ProfileOptions, TableProfile};
use crate::providers::{Embedder, TextGenerator};
use crate::search::{build_index, index_texts, IndexKind, SearchError, VectorIndex};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

pub struct PreparedLake {
    pub catalog: CatalogStore,
    pub profiles: BTreeMap<String, TableProfile>,
    pub descriptors: BTreeMap<String, TableDescriptor>,
}

impl PreparedLake {
    pub fn descriptor_list(&self) -> Vec<TableDescriptor> {
        self.descriptors.values().cloned().collect()
    }

    pub fn index(
        &self,
        kind: IndexKind,
        embedder: &dyn Embedder,
        seed: u64,
    ) -> Result<VectorIndex, SearchError> {
        let texts = index_texts(kind, &self.catalog, &self.descriptor_list(), seed)?;
        build_index(&texts, kind, embedder)
    }
}

pub fn prepare_lake(
    root: &Path,
    gen: Option<&dyn TextGenerator>,
) -> Result<PreparedLake, PipelineError> {
    let (catalog, _) = ingest_lake(root, &IngestOptions::default())?;
    let profiles: BTreeMap<String, TableProfile> =
        profile_catalog(&catalog, &ProfileOptions::default())?
            .into_iter()
            .map(|p| (p.table_id.clone(), p))
            .collect();
    let descriptors = describe_catalog(&catalog, &profiles, gen)?
        .into_iter()
        .map(|d| (d.table_id.clone(), d))
        .collect();
    Ok(PreparedLake {
        catalog,
        profiles,
        descriptors,
    })
}
