//! Exact k-nearest-neighbour example retrieval by cosine similarity.
//!
//! The index is a flat, immutable list of unit-normalized vectors scanned
//! linearly per query. Results are ordered by descending similarity with
//! ties broken by insertion order, so retrieval is fully deterministic.

mod embfile;

pub use embfile::{
    ids_sidecar_path, read_embeddings_bin, read_embeddings_jsonl, write_embeddings_bin,
    write_embeddings_jsonl, EmbeddingTable, BIN_MAGIC,
};

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::ParaphrasePair;
use crate::error::{Error, Result};

/// Number of examples retrieved per query unless configured otherwise.
pub const DEFAULT_K: usize = 2;

/// A sentence embedding as produced by an embedding backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f32>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    fn unit(&self) -> Option<Vec<f64>> {
        let norm = self.0.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        Some(self.0.iter().map(|&x| f64::from(x) / norm).collect())
    }
}

impl From<Vec<f32>> for EmbeddingVector {
    fn from(v: Vec<f32>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleRecord {
    pub pair: ParaphrasePair,
    unit: Vec<f64>,
}

impl ExampleRecord {
    pub fn id(&self) -> &str {
        &self.pair.id
    }

    /// The stored unit-normalized vector.
    pub fn unit_vector(&self) -> &[f64] {
        &self.unit
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<'a> {
    pub record: &'a ExampleRecord,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalStrategy {
    #[default]
    Knn,
    Random,
}

#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    records: Vec<ExampleRecord>,
    by_id: HashMap<String, usize>,
    dim: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Heap entry ordered so that the worst candidate is the maximum.
struct Candidate {
    similarity: f64,
    position: usize,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .similarity
            .total_cmp(&self.similarity)
            .then(self.position.cmp(&other.position))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl RetrievalIndex {
    /// Normalizes and stores every vector. Fails on the first record with a
    /// duplicate id, a dimension different from the first record's, or a
    /// zero (or non-finite) norm.
    pub fn build(records: Vec<(ParaphrasePair, EmbeddingVector)>) -> Result<Self> {
        let dim = records.first().map_or(0, |(_, v)| v.dim());
        let mut by_id = HashMap::with_capacity(records.len());
        let mut stored = Vec::with_capacity(records.len());
        for (pair, vector) in records {
            let fail = |reason: String| Error::IndexBuild {
                id: pair.id.clone(),
                reason,
            };
            if vector.dim() != dim || dim == 0 {
                return Err(fail(format!("dimension {} (index dimension {dim})", vector.dim())));
            }
            let Some(unit) = vector.unit() else {
                return Err(fail("vector has zero or non-finite norm".into()));
            };
            if by_id.insert(pair.id.clone(), stored.len()).is_some() {
                return Err(fail("duplicate id".into()));
            }
            stored.push(ExampleRecord { pair, unit });
        }
        Ok(Self {
            records: stored,
            by_id,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Vector dimension; 0 for an empty index.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[ExampleRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&ExampleRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    fn query_unit(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<f64>> {
        if k == 0 {
            return Err(Error::argument("k must be at least 1"));
        }
        if !self.is_empty() && query.dim() != self.dim {
            return Err(Error::argument(format!(
                "query dimension {} does not match index dimension {}",
                query.dim(),
                self.dim
            )));
        }
        query
            .unit()
            .ok_or_else(|| Error::argument("query vector has zero or non-finite norm"))
    }

    /// The `k` most similar records not in `exclude`, most similar first.
    pub fn query_knn(
        &self,
        query: &EmbeddingVector,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<Neighbor<'_>>> {
        let q = self.query_unit(query, k)?;
        let mut heap = BinaryHeap::with_capacity(k + 1);
        for (position, rec) in self.records.iter().enumerate() {
            if exclude.contains(rec.id()) {
                continue;
            }
            heap.push(Candidate {
                similarity: dot(&q, &rec.unit),
                position,
            });
            if heap.len() > k {
                heap.pop();
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| Neighbor {
                record: &self.records[c.position],
                similarity: c.similarity,
            })
            .collect())
    }

    /// `k` records drawn uniformly without replacement (seeded), reported with
    /// their similarity to `query` and ordered like [`Self::query_knn`].
    pub fn query_random(
        &self,
        query: &EmbeddingVector,
        k: usize,
        exclude: &HashSet<String>,
        seed: u64,
    ) -> Result<Vec<Neighbor<'_>>> {
        let q = self.query_unit(query, k)?;
        let pool: Vec<usize> = (0..self.records.len())
            .filter(|&i| !exclude.contains(self.records[i].id()))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<Candidate> = pool
            .choose_multiple(&mut rng, k)
            .map(|&position| Candidate {
                similarity: dot(&q, &self.records[position].unit),
                position,
            })
            .collect();
        picked.sort();
        Ok(picked
            .into_iter()
            .map(|c| Neighbor {
                record: &self.records[c.position],
                similarity: c.similarity,
            })
            .collect())
    }

    pub fn query(
        &self,
        strategy: RetrievalStrategy,
        query: &EmbeddingVector,
        k: usize,
        exclude: &HashSet<String>,
        seed: u64,
    ) -> Result<Vec<Neighbor<'_>>> {
        match strategy {
            RetrievalStrategy::Knn => self.query_knn(query, k, exclude),
            RetrievalStrategy::Random => self.query_random(query, k, exclude, seed),
        }
    }
}
