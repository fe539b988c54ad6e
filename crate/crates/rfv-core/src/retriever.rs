//! Bi-encoder relevance scoring and exact top-k maximum inner product
//! search over the bank, per camera view.
//!
//! Relevance is the plain inner product of the query and memory vectors.
//! Search is exact: a descending-norm scan pruned with the Cauchy-Schwarz
//! bound, guaranteed to return the brute-force answer (pruning only fires
//! strictly below the current k-th best score, so boundary ties are never
//! lost).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bank::BankEntry;
use crate::error::{Error, Result};
use crate::rng::fnv1a;

pub const DEFAULT_TOP_K: usize = 3;

/// Hashed bag-of-words embedder configuration. Deterministic stand-in for
/// a text encoder; precomputed embeddings take precedence wherever both
/// exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    pub dim: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig { dim: 64 }
    }
}

/// Dense query/memory vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Lowercase, split on non-alphanumerics, hash each token into one of
/// `dim` buckets (FNV-1a mod dim), accumulate counts, L2-normalize.
pub fn embed_text(text: &str, config: &EmbedderConfig) -> Result<EmbeddingVector> {
    let mut counts = vec![0.0f64; config.dim];
    let mut any = false;
    for token in text
        .to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let bucket = (fnv1a(token.as_bytes()) % config.dim as u64) as usize;
        counts[bucket] += 1.0;
        any = true;
    }
    if !any {
        return Err(Error::EmptyText);
    }
    let norm = counts.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut counts {
        *v /= norm;
    }
    Ok(EmbeddingVector { values: counts })
}

/// Bi-encoder score: the exact dot product of query and memory vectors.
pub fn relevance(q: &EmbeddingVector, m: &EmbeddingVector) -> Result<f64> {
    if q.dim() != m.dim() {
        return Err(Error::DimMismatch {
            context: "relevance vector dims",
            got: m.dim(),
            expected: q.dim(),
        });
    }
    Ok(q.values.iter().zip(&m.values).map(|(a, b)| a * b).sum())
}

/// Ordered (entry_id, score) retrieval results: scores non-increasing,
/// ties broken by ascending entry_id, no duplicates, length <= k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub items: Vec<(String, f64)>,
}

impl RankedList {
    pub fn ids(&self) -> Vec<&str> {
        self.items.iter().map(|(id, _)| id.as_str()).collect()
    }
}

/// Immutable search index: one embedding row per entry, plus a cache of
/// row norms sorted descending for pruned scans.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    dim: usize,
    entry_ids: Vec<String>,
    views: Vec<Option<String>>,
    rows: Vec<Vec<f64>>,
    norms: Vec<f64>,
    /// Row indices permuted by descending norm (ties by ascending row).
    by_norm_desc: Vec<usize>,
}

/// Search statistics; `visited` counts rows actually scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchStats {
    pub visited: usize,
}

impl RetrievalIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn entry_ids(&self) -> &[String] {
        &self.entry_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }
}

/// Build an index over `entries` in iteration order. Precomputed entry
/// embeddings win over re-embedding the narration.
pub fn build_index<'a>(
    entries: impl IntoIterator<Item = &'a BankEntry>,
    config: &EmbedderConfig,
) -> Result<RetrievalIndex> {
    let mut entry_ids = Vec::new();
    let mut views = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for entry in entries {
        let row = match &entry.embedding {
            Some(emb) => emb.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>(),
            None => embed_text(&entry.narration.text, config)?.values,
        };
        if row.len() != config.dim {
            return Err(Error::DimMismatch {
                context: "index row vs embedder dim",
                got: row.len(),
                expected: config.dim,
            });
        }
        entry_ids.push(entry.entry_id.clone());
        views.push(entry.clip.view_id.clone());
        rows.push(row);
    }
    let norms: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut by_norm_desc: Vec<usize> = (0..rows.len()).collect();
    by_norm_desc.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap().then(a.cmp(&b)));
    Ok(RetrievalIndex {
        dim: config.dim,
        entry_ids,
        views,
        rows,
        norms,
        by_norm_desc,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn topk_filtered(
    index: &RetrievalIndex,
    q: &EmbeddingVector,
    k: usize,
    accept: impl Fn(usize) -> bool,
) -> Result<(RankedList, SearchStats)> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if q.dim() != index.dim {
        return Err(Error::DimMismatch {
            context: "query vs index dim",
            got: q.dim(),
            expected: index.dim,
        });
    }
    if k == 0 {
        return Err(Error::invariant("topk-k", "k must be >= 1"));
    }
    let qnorm = q.norm();

    // Prune only on a strict bound violation so boundary ties stay in play.
    let mut candidates: Vec<(usize, f64)> = Vec::new();
    let mut kth_best = f64::NEG_INFINITY;
    let mut visited = 0usize;
    for &row in &index.by_norm_desc {
        if !accept(row) {
            continue;
        }
        if candidates.len() >= k && qnorm * index.norms[row] < kth_best {
            break;
        }
        visited += 1;
        let score = dot(&q.values, &index.rows[row]);
        candidates.push((row, score));
        if candidates.len() >= k {
            // k-th best score among candidates (k is small; recompute lazily)
            let mut scores: Vec<f64> = candidates.iter().map(|c| c.1).collect();
            scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
            kth_best = scores[k - 1];
        }
    }

    candidates.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| index.entry_ids[a.0].cmp(&index.entry_ids[b.0]))
    });
    candidates.truncate(k);
    let items = candidates
        .into_iter()
        .map(|(row, score)| (index.entry_ids[row].clone(), score))
        .collect();
    Ok((RankedList { items }, SearchStats { visited }))
}

/// Exact top-k by inner product; deterministic tie-break by ascending
/// entry_id. Returns all entries when the index is smaller than k.
pub fn mips_topk(index: &RetrievalIndex, q: &EmbeddingVector, k: usize) -> Result<RankedList> {
    mips_topk_with_stats(index, q, k).map(|(list, _)| list)
}

pub fn mips_topk_with_stats(
    index: &RetrievalIndex,
    q: &EmbeddingVector,
    k: usize,
) -> Result<(RankedList, SearchStats)> {
    topk_filtered(index, q, k, |_| true)
}

/// One independent top-k query per view. Entries restricted to a view only
/// match that view; entries without a view restriction match every view.
pub fn retrieve_per_view(
    index: &RetrievalIndex,
    robot_instruction: &str,
    views: &[String],
    k: usize,
    config: &EmbedderConfig,
) -> Result<BTreeMap<String, RankedList>> {
    let q = embed_text(robot_instruction, config)?;
    retrieve_per_view_embedded(index, &q, views, k)
}

pub fn retrieve_per_view_embedded(
    index: &RetrievalIndex,
    q: &EmbeddingVector,
    views: &[String],
    k: usize,
) -> Result<BTreeMap<String, RankedList>> {
    let mut out = BTreeMap::new();
    for view in views {
        let (list, _) = topk_filtered(index, q, k, |row| {
            index.views[row].as_deref().map_or(true, |v| v == view)
        })?;
        out.insert(view.clone(), list);
    }
    Ok(out)
}
