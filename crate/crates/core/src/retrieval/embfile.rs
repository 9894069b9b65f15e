//! Embedding files.
//!
//! JSONL: one `{"id": str, "vector": [f32, ...]}` per line.
//!
//! Binary: the 8-byte magic `RAPTEMB1`, record count and dimension as
//! little-endian u32, then `count * dim` little-endian f32 values, row-major.
//! Ids live in a sidecar JSONL file of `{"id": str}` lines, in row order.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EmbeddingVector;
use crate::dataio::{load_jsonl, to_jsonl, write_atomic};
use crate::error::{Error, Result};

pub const BIN_MAGIC: &[u8; 8] = b"RAPTEMB1";
const HEADER_LEN: usize = 16;

/// Id-aligned embeddings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    pub ids: Vec<String>,
    pub vectors: Vec<EmbeddingVector>,
}

impl EmbeddingTable {
    pub fn new(ids: Vec<String>, vectors: Vec<EmbeddingVector>) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::argument(format!(
                "{} ids for {} vectors",
                ids.len(),
                vectors.len()
            )));
        }
        let t = Self { ids, vectors };
        t.dim()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Common dimension, 0 when empty.
    pub fn dim(&self) -> Result<usize> {
        let dim = self.vectors.first().map_or(0, EmbeddingVector::dim);
        if let Some((i, v)) = self.vectors.iter().enumerate().find(|(_, v)| v.dim() != dim) {
            return Err(Error::argument(format!(
                "vector {:?} has dimension {}, expected {dim}",
                self.ids[i],
                v.dim()
            )));
        }
        Ok(dim)
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.ids.iter().position(|i| i == id).map(|p| &self.vectors[p])
    }
}

#[derive(Serialize, Deserialize)]
struct JsonlRow {
    id: String,
    vector: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct IdRow {
    id: String,
}

fn check_unique(ids: &[String], path: &Path) -> Result<()> {
    let mut seen = HashSet::new();
    for (i, id) in ids.iter().enumerate() {
        if !seen.insert(id) {
            return Err(Error::data(path, i + 1, format!("duplicate id {id:?}")));
        }
    }
    Ok(())
}

/// `foo.bin` -> `foo.ids.jsonl`.
pub fn ids_sidecar_path(bin_path: &Path) -> PathBuf {
    bin_path.with_extension("ids.jsonl")
}

pub fn write_embeddings_jsonl(path: &Path, table: &EmbeddingTable) -> Result<()> {
    table.dim()?;
    let rows: Vec<JsonlRow> = table
        .ids
        .iter()
        .zip(&table.vectors)
        .map(|(id, v)| JsonlRow {
            id: id.clone(),
            vector: v.0.clone(),
        })
        .collect();
    write_atomic(path, to_jsonl(&rows).as_bytes())
}

pub fn read_embeddings_jsonl(path: &Path) -> Result<EmbeddingTable> {
    let rows: Vec<JsonlRow> = load_jsonl(path)?;
    let dim = rows.first().map_or(0, |r| r.vector.len());
    let mut ids = Vec::with_capacity(rows.len());
    let mut vectors = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        if row.vector.len() != dim || dim == 0 {
            return Err(Error::data(
                path,
                i + 1,
                format!("vector dimension {} (expected {dim})", row.vector.len()),
            ));
        }
        ids.push(row.id);
        vectors.push(EmbeddingVector(row.vector));
    }
    check_unique(&ids, path)?;
    Ok(EmbeddingTable { ids, vectors })
}

/// Writes the binary matrix to `path` and ids to `ids_path`.
pub fn write_embeddings_bin(path: &Path, ids_path: &Path, table: &EmbeddingTable) -> Result<()> {
    let dim = table.dim()?;
    let count = u32::try_from(table.len()).map_err(|_| Error::argument("too many vectors"))?;
    let dim32 = u32::try_from(dim).map_err(|_| Error::argument("dimension too large"))?;
    let mut bytes = Vec::with_capacity(HEADER_LEN + table.len() * dim * 4);
    bytes.extend_from_slice(BIN_MAGIC);
    bytes.extend_from_slice(&count.to_le_bytes());
    bytes.extend_from_slice(&dim32.to_le_bytes());
    for v in &table.vectors {
        for x in &v.0 {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    write_atomic(path, &bytes)?;
    let ids: Vec<IdRow> = table.ids.iter().map(|id| IdRow { id: id.clone() }).collect();
    write_atomic(ids_path, to_jsonl(&ids).as_bytes())
}

pub fn read_embeddings_bin(path: &Path, ids_path: &Path) -> Result<EmbeddingTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::data(path, 0, reason);
    if bytes.len() < HEADER_LEN || &bytes[..8] != BIN_MAGIC {
        return Err(bad("missing RAPTEMB1 header".into()));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| bad("header count/dim overflow".into()))?;
    if bytes.len() != expected {
        return Err(bad(format!(
            "{} bytes for count={count} dim={dim} (expected {expected})",
            bytes.len()
        )));
    }
    if count > 0 && dim == 0 {
        return Err(bad("zero dimension".into()));
    }
    let ids: Vec<String> = load_jsonl::<IdRow>(ids_path)?.into_iter().map(|r| r.id).collect();
    if ids.len() != count {
        return Err(Error::data(
            ids_path,
            0,
            format!("{} ids for {count} vectors", ids.len()),
        ));
    }
    check_unique(&ids, ids_path)?;
    let vectors = bytes[HEADER_LEN..]
        .chunks_exact(dim.max(1) * 4)
        .take(count)
        .map(|row| {
            EmbeddingVector(
                row.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                    .collect(),
            )
        })
        .collect();
    Ok(EmbeddingTable { ids, vectors })
}
