//! Nearest-neighbor template retrieval over precomputed embeddings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::workbench::{load_embeddings, load_manifest};

#[derive(Debug, Clone, PartialEq)]
pub struct IndexItem {
    /// One vector per rendered pose or view.
    pub vectors: Vec<Vec<f64>>,
    pub shape: PathBuf,
}

/// Immutable embedding index keyed by item id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    dim: usize,
    items: BTreeMap<String, IndexItem>,
}

/// One entry for [`build_index`]: `(id, vectors, shape file)`.
pub type IndexEntry = (String, Vec<Vec<f64>>, PathBuf);

pub fn build_index(entries: Vec<IndexEntry>) -> Result<EmbeddingIndex> {
    let mut dim = None;
    let mut items = BTreeMap::new();
    for (id, vectors, shape) in entries {
        if vectors.is_empty() {
            return Err(Error::invariant(format!("index[{id}]"), "needs at least one vector"));
        }
        for (v, x) in vectors.iter().enumerate() {
            let d = *dim.get_or_insert(x.len());
            if x.len() != d {
                return Err(Error::dim(format!("item `{id}` vector {v} has length {}, expected {d}", x.len())));
            }
            if x.iter().any(|c| !c.is_finite()) {
                return Err(Error::invariant(format!("index[{id}][{v}]"), "non-finite component"));
            }
        }
        if items.insert(id.clone(), IndexItem { vectors, shape }).is_some() {
            return Err(Error::invariant(format!("index[{id}]"), "duplicate item id"));
        }
    }
    Ok(EmbeddingIndex { dim: dim.unwrap_or(0), items })
}

impl EmbeddingIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&IndexItem> {
        self.items.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.keys().map(String::as_str)
    }

    /// Loads every embedding file named by a manifest.
    pub fn from_manifest(path: &Path) -> Result<Self> {
        let manifest = load_manifest(path)?;
        let mut entries = Vec::with_capacity(manifest.len());
        for (id, e) in manifest {
            let (_, vectors) = load_embeddings(&e.embedding)?;
            entries.push((id, vectors, e.shape));
        }
        build_index(entries)
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `min_{t,v} ‖q_t − F_v‖²` for one item.
pub fn item_score(query: &[Vec<f64>], item: &IndexItem) -> f64 {
    query
        .iter()
        .flat_map(|q| item.vectors.iter().map(move |f| dist_sq(q, f)))
        .fold(f64::INFINITY, f64::min)
}

/// The `k` items closest to any query frame, most similar first; ties
/// are broken by id.
pub fn nearest(index: &EmbeddingIndex, query: &[Vec<f64>], k: usize) -> Result<Vec<(String, f64)>> {
    if index.is_empty() {
        return Err(Error::invalid("embedding index is empty"));
    }
    if query.is_empty() {
        return Err(Error::invalid("query has no frames"));
    }
    if let Some(t) = query.iter().position(|q| q.len() != index.dim) {
        return Err(Error::dim(format!("query frame {t} has length {}, index dimension is {}", query[t].len(), index.dim)));
    }
    let items: Vec<(&String, &IndexItem)> = index.items.iter().collect();
    let mut scored: Vec<(String, f64)> =
        items.par_iter().map(|(id, item)| ((*id).clone(), item_score(query, item))).collect();
    // ids arrive sorted, so a stable sort on score breaks ties by id
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    scored.truncate(k);
    Ok(scored)
}
