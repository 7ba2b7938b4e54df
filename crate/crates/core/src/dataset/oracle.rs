//! Exact filtered search, used as ground truth.

use super::{l2_squared, AttributeTable, HybridQuery, Neighbor, QueryPredicate, ResultSet, VectorDataset};
use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Fraction of rows satisfying every clause on raw values.
pub fn selectivity(predicate: &QueryPredicate, attrs: &AttributeTable) -> Result<f64> {
    predicate.validate(&attrs.kinds())?;
    let hits = (0..attrs.n())
        .filter(|&i| predicate.matches_row(attrs, i))
        .count();
    Ok(hits as f64 / attrs.n() as f64)
}

fn exact_top_k(
    dataset: &VectorDataset,
    query: &[f32],
    k: usize,
    mut passes: impl FnMut(usize) -> bool,
) -> ResultSet {
    let mut scored: Vec<(f64, u32)> = (0..dataset.n())
        .filter(|&i| passes(i))
        .map(|i| (l2_squared(dataset.row(i), query), dataset.ids()[i]))
        .collect();
    let by_rank = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if scored.len() > k {
        scored.select_nth_unstable_by(k, by_rank);
        scored.truncate(k);
    }
    scored.sort_by(by_rank);
    ResultSet {
        entries: scored
            .into_iter()
            .map(|(d2, id)| Neighbor {
                id,
                distance: d2.sqrt(),
            })
            .collect(),
    }
}

/// Exact Euclidean top-k over rows whose raw attributes satisfy the predicate.
pub fn brute_force_search(
    dataset: &VectorDataset,
    attrs: &AttributeTable,
    query: &HybridQuery,
) -> Result<ResultSet> {
    if attrs.n() != dataset.n() {
        return Err(Error::Format(format!(
            "{} attribute rows for {} vectors",
            attrs.n(),
            dataset.n()
        )));
    }
    query.validate(dataset.d(), &attrs.kinds())?;
    Ok(exact_top_k(dataset, &query.vector, query.k, |i| {
        query.predicate.matches_row(attrs, i)
    }))
}

/// Exact top-k over rows whose global id is set in `mask` (ignores the
/// query predicate).
pub fn brute_force_masked(
    dataset: &VectorDataset,
    mask: &Bitmap,
    query: &HybridQuery,
) -> Result<ResultSet> {
    if query.vector.len() != dataset.d() {
        return Err(Error::DimensionMismatch {
            expected: dataset.d(),
            actual: query.vector.len(),
        });
    }
    let ids = dataset.ids();
    Ok(exact_top_k(dataset, &query.vector, query.k, |i| {
        mask.get(ids[i] as usize)
    }))
}

pub fn brute_force_batch(
    exec: Exec,
    dataset: &VectorDataset,
    attrs: &AttributeTable,
    queries: &[HybridQuery],
) -> Result<Vec<ResultSet>> {
    par::map_slice(exec, queries, |q| brute_force_search(dataset, attrs, q))
        .into_iter()
        .collect()
}

/// `|G ∩ R| / k` with `k = min(requested k, |G|)`; an empty ground truth
/// scores 1.
pub fn recall_at_k(ground_truth: &[u32], retrieved: &[u32], k: usize) -> f64 {
    let g = &ground_truth[..ground_truth.len().min(k)];
    if g.is_empty() {
        return 1.0;
    }
    let r = &retrieved[..retrieved.len().min(k)];
    let hits = g.iter().filter(|id| r.contains(id)).count();
    hits as f64 / g.len() as f64
}
