use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::providers::EmbeddingVector;

use super::SearchError;

const MAGIC: &[u8; 4] = b"MLIX";
const INDEX_VERSION: u32 = 1;

/// Which text of a table was embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IndexKind {
    SchemaOnly,
    Content,
    Discriminative,
}

impl IndexKind {
    pub const ALL: [IndexKind; 3] = [
        IndexKind::SchemaOnly,
        IndexKind::Content,
        IndexKind::Discriminative,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            IndexKind::SchemaOnly => "schema_only",
            IndexKind::Content => "content",
            IndexKind::Discriminative => "discriminative",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.slug() == s.to_ascii_lowercase().replace('-', "_"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub table_id: String,
    pub vector: EmbeddingVector,
}

/// Immutable set of unit vectors, one per table, all of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    pub kind: IndexKind,
    dims: usize,
    entries: Vec<IndexEntry>,
}

impl VectorIndex {
    pub fn new(
        kind: IndexKind,
        dims: usize,
        mut entries: Vec<IndexEntry>,
    ) -> Result<Self, SearchError> {
        entries.sort_by(|a, b| a.table_id.cmp(&b.table_id));
        for w in entries.windows(2) {
            if w[0].table_id == w[1].table_id {
                return Err(SearchError::DuplicateId(w[0].table_id.clone()));
            }
        }
        if let Some(bad) = entries.iter().find(|e| e.vector.dims() != dims) {
            return Err(SearchError::DimensionMismatch {
                expected: dims,
                got: bad.vector.dims(),
            });
        }
        Ok(Self {
            kind,
            dims,
            entries,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn get(&self, table_id: &str) -> Option<&EmbeddingVector> {
        self.entries
            .binary_search_by(|e| e.table_id.as_str().cmp(table_id))
            .ok()
            .map(|i| &self.entries[i].vector)
    }

    /// Little-endian: magic, version u32, dims u32, count u64, then per entry
    /// an u16 id length, the UTF-8 id and `dims` f32 components.
    pub fn save(&self, path: &Path) -> Result<(), SearchError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&INDEX_VERSION.to_le_bytes())?;
        w.write_all(&(self.dims as u32).to_le_bytes())?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for e in &self.entries {
            let id = e.table_id.as_bytes();
            let len = u16::try_from(id.len()).map_err(|_| {
                SearchError::CorruptIndex(format!("table id too long: {}", e.table_id))
            })?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(id)?;
            for v in e.vector.values() {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an index file; vectors are renormalized after the f32 round trip.
    pub fn load(path: &Path, kind: IndexKind) -> Result<Self, SearchError> {
        let bytes = std::fs::read(path)?;
        let mut r = &bytes[..];
        let corrupt = |what: &str| SearchError::CorruptIndex(format!("{}: {what}", path.display()));
        let take = |n: usize, r: &mut &[u8]| -> Result<Vec<u8>, SearchError> {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf).map_err(|_| corrupt("truncated"))?;
            Ok(buf)
        };
        if take(4, &mut r)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(take(4, &mut r)?.try_into().unwrap());
        if version != INDEX_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let dims = u32::from_le_bytes(take(4, &mut r)?.try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(take(8, &mut r)?.try_into().unwrap());
        let mut entries = Vec::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(take(2, &mut r)?.try_into().unwrap()) as usize;
            let id =
                String::from_utf8(take(len, &mut r)?).map_err(|_| corrupt("id is not UTF-8"))?;
            let raw = take(dims * 4, &mut r)?;
            let values: Vec<f64> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            let vector =
                EmbeddingVector::normalized(values).ok_or_else(|| corrupt("zero vector"))?;
            entries.push(IndexEntry {
                table_id: id,
                vector,
            });
        }
        if !r.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        Self::new(kind, dims, entries)
    }
}
