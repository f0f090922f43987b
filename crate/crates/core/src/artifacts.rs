//! Layout of the `.metalake/` directory and the versioned JSONL container
//! used by every persisted artifact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const META_DIR: &str = ".metalake";
pub const CATALOG_FILE: &str = "catalog.jsonl";
pub const PROFILES_FILE: &str = "profiles.jsonl";
pub const DESCRIPTORS_FILE: &str = "descriptors.jsonl";
pub const LINEAGE_FILE: &str = "lineage.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Paths of all artifacts belonging to one lake.
#[derive(Debug, Clone)]
pub struct LakePaths {
    root: PathBuf,
}

impl LakePaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn meta_dir(&self) -> PathBuf {
        self.root.join(META_DIR)
    }

    pub fn catalog(&self) -> PathBuf {
        self.meta_dir().join(CATALOG_FILE)
    }

    pub fn profiles(&self) -> PathBuf {
        self.meta_dir().join(PROFILES_FILE)
    }

    pub fn descriptors(&self) -> PathBuf {
        self.meta_dir().join(DESCRIPTORS_FILE)
    }

    pub fn lineage(&self) -> PathBuf {
        self.meta_dir().join(LINEAGE_FILE)
    }

    pub fn manifest(&self) -> PathBuf {
        self.meta_dir().join(MANIFEST_FILE)
    }

    pub fn index(&self, kind_slug: &str) -> PathBuf {
        self.meta_dir().join(format!("index-{kind_slug}.bin"))
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Header {
    pub format: String,
    pub version: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

/// Writes a header object followed by one JSON object per item.
pub fn write_jsonl<T: Serialize>(
    path: &Path,
    format: &str,
    version: u32,
    items: impl IntoIterator<Item = T>,
) -> Result<(), JsonlError> {
    let io = |source| JsonlError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let header = Header {
        format: format.to_string(),
        version,
    };
    writeln!(out, "{}", to_line(&header)).map_err(io)?;
    for item in items {
        writeln!(out, "{}", to_line(&item)).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn to_line<T: Serialize>(value: &T) -> String {
    // Plain data types with string keys always serialize.
    serde_json::to_string(value).expect("serializable artifact")
}

/// Reads a file produced by [`write_jsonl`], checking format name and version.
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    format: &str,
    version: u32,
) -> Result<Vec<T>, JsonlError> {
    let corrupt = |reason: String| JsonlError::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|source| JsonlError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines();
    let first = match lines.next() {
        Some(Ok(l)) => l,
        Some(Err(e)) => return Err(corrupt(e.to_string())),
        None => return Err(corrupt("missing header line".into())),
    };
    let header: Header =
        serde_json::from_str(&first).map_err(|e| corrupt(format!("bad header: {e}")))?;
    if header.format != format {
        return Err(corrupt(format!(
            "expected format {format:?}, found {:?}",
            header.format
        )));
    }
    if header.version != version {
        return Err(corrupt(format!(
            "unsupported version {} (expected {version})",
            header.version
        )));
    }
    let mut items = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| corrupt(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let item =
            serde_json::from_str(&line).map_err(|e| corrupt(format!("line {}: {e}", n + 2)))?;
        items.push(item);
    }
    Ok(items)
}
