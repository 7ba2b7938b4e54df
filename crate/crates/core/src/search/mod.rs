//! Query pipeline: filtered partition selection, per-partition scans and
//! the final merge.

mod scan;
mod store;

pub use scan::{
    build_adc_table, hamming_prune, keep_count, lb_distances, refine, search_partition, AdcTable,
    Candidate, ScanStats, SearchParams,
};
pub use store::{FileVectorStore, MemVectorStore, VectorStore};

use serde::{Deserialize, Serialize};

use crate::bitmap::Bitmap;
use crate::dataset::{HybridQuery, ResultSet};
use crate::error::Result;
use crate::hybrid_filter::{filter_masks, AttributeQIndex};
use crate::index::{CoarseIndex, HybridIndex};
use crate::par::{self, Exec};

/// One query's visit to one partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub query: usize,
    /// Candidate rows local to the partition; never empty.
    pub candidates: Bitmap,
    /// Distance to this centroid over distance to the nearest centroid.
    pub ratio: f64,
}

/// Partition visits for a batch of queries.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    /// `visits[p]`, ordered by query index.
    pub visits: Vec<Vec<Visit>>,
    /// Per query, partitions cut off by the threshold, as `(partition,
    /// ratio)` ascending by ratio.
    pub pruned: Vec<Vec<(usize, f64)>>,
}

impl PartitionPlan {
    pub fn total_visits(&self) -> usize {
        self.visits.iter().map(Vec::len).sum()
    }

    /// Candidates planned for query `q` across partitions.
    pub fn candidates_for(&self, q: usize) -> usize {
        self.visits
            .iter()
            .flatten()
            .filter(|v| v.query == q)
            .map(|v| v.candidates.count_ones())
            .sum()
    }

    pub fn loads(&self) -> Vec<usize> {
        self.visits.iter().map(Vec::len).collect()
    }
}

/// Local candidate bitmap `F ∧ P_V[p]`, or `None` when empty.
pub fn partition_candidates(coarse: &CoarseIndex, mask: &Bitmap, p: usize) -> Option<Bitmap> {
    let both = mask.and(&coarse.residency[p]);
    if !both.any() {
        return None;
    }
    let mut local = Bitmap::zeros(coarse.sizes[p]);
    for g in both.iter_ones() {
        local.set(coarse.local_rows[g] as usize);
    }
    Some(local)
}

fn ratio_of(dist: f64, nearest: f64) -> f64 {
    if nearest > 0.0 {
        dist / nearest
    } else if dist == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Ranks centroids by distance for each query and walks them in order,
/// stopping once the distance ratio to the nearest centroid exceeds `t`
/// and at least `ks[q]` candidates have been collected.
pub fn select_partitions(
    exec: Exec,
    coarse: &CoarseIndex,
    masks: &[Bitmap],
    queries: &[&[f32]],
    t: f64,
    ks: &[usize],
) -> PartitionPlan {
    let per_query = par::map_range(exec, queries.len(), |qi| {
        let dists = coarse.partitions.centroid_distances(queries[qi]);
        let mut order: Vec<usize> = (0..dists.len()).collect();
        order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
        let nearest = dists[order[0]];
        let mut visits = Vec::new();
        let mut pruned = Vec::new();
        let mut found = 0usize;
        for (pos, &p) in order.iter().enumerate() {
            let ratio = ratio_of(dists[p], nearest);
            if ratio > t && found >= ks[qi] {
                pruned.extend(order[pos..].iter().map(|&p| (p, ratio_of(dists[p], nearest))));
                break;
            }
            if let Some(local) = partition_candidates(coarse, &masks[qi], p) {
                found += local.count_ones();
                visits.push((p, local, ratio));
            }
        }
        (visits, pruned)
    });
    let mut plan = PartitionPlan {
        visits: vec![Vec::new(); coarse.p()],
        pruned: Vec::with_capacity(queries.len()),
    };
    for (qi, (visits, pruned)) in per_query.into_iter().enumerate() {
        for (p, candidates, ratio) in visits {
            plan.visits[p].push(Visit {
                query: qi,
                candidates,
                ratio,
            });
        }
        plan.pruned.push(pruned);
    }
    plan
}

/// Tops up partitions with fewer than `target` visits using the queries
/// that pruned them most narrowly (smallest ratio first). Existing visits
/// are kept; queries with no candidates in the partition are skipped.
pub fn rebalance_batch(
    mut plan: PartitionPlan,
    coarse: &CoarseIndex,
    masks: &[Bitmap],
    target: usize,
) -> PartitionPlan {
    for p in 0..plan.visits.len() {
        if plan.visits[p].len() >= target {
            continue;
        }
        let mut offers: Vec<(f64, usize)> = plan
            .pruned
            .iter()
            .enumerate()
            .filter_map(|(q, list)| list.iter().find(|(pp, _)| *pp == p).map(|&(_, r)| (r, q)))
            .collect();
        offers.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (ratio, q) in offers {
            if plan.visits[p].len() >= target {
                break;
            }
            if let Some(candidates) = partition_candidates(coarse, &masks[q], p) {
                plan.visits[p].push(Visit {
                    query: q,
                    candidates,
                    ratio,
                });
                plan.pruned[q].retain(|(pp, _)| *pp != p);
            }
        }
        plan.visits[p].sort_by_key(|v| v.query);
    }
    plan
}

/// `k` best entries over all partials (ties by id, duplicate ids dropped).
pub fn merge_results(partials: &[ResultSet], k: usize) -> ResultSet {
    let mut all: Vec<_> = partials.iter().flat_map(|r| r.entries.iter().copied()).collect();
    all.sort_by(|a, b| a.cmp_rank(b));
    let mut seen = std::collections::HashSet::new();
    all.retain(|e| seen.insert(e.id));
    all.truncate(k);
    ResultSet { entries: all }
}

/// Batch options shared by the local pipeline and the simulated runtime.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryOptions {
    pub h_perc: f64,
    pub refine_factor: f64,
    /// Replaces the index's threshold `T`.
    pub threshold_override: Option<f64>,
    pub rebalance: bool,
    /// Visits per partition to top up to; `None` means the mean load.
    pub rebalance_target: Option<usize>,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self {
            h_perc: 10.0,
            refine_factor: 2.0,
            threshold_override: None,
            rebalance: false,
            rebalance_target: None,
        }
    }
}

impl QueryOptions {
    pub fn params(&self, k: usize) -> SearchParams {
        SearchParams {
            k,
            h_perc: self.h_perc,
            refine_factor: self.refine_factor,
        }
    }

    pub fn rebalance_target_for(&self, plan: &PartitionPlan) -> usize {
        self.rebalance_target
            .unwrap_or_else(|| plan.total_visits().div_ceil(plan.visits.len().max(1)))
    }
}

/// Plans a batch: masks, partition selection and optional rebalancing.
pub fn plan_batch(
    exec: Exec,
    index: &HybridIndex,
    queries: &[HybridQuery],
    opts: &QueryOptions,
) -> Result<(Vec<Bitmap>, PartitionPlan)> {
    plan_queries(exec, &index.coarse, &index.attributes, index.t(), index.d(), queries, opts)
}

/// [`plan_batch`] over separately loaded coarse and attribute indexes.
pub fn plan_queries(
    exec: Exec,
    coarse: &CoarseIndex,
    attributes: &AttributeQIndex,
    t: f64,
    d: usize,
    queries: &[HybridQuery],
    opts: &QueryOptions,
) -> Result<(Vec<Bitmap>, PartitionPlan)> {
    let kinds = attributes.kinds();
    for q in queries {
        q.validate(d, &kinds)?;
    }
    let predicates: Vec<_> = queries.iter().map(|q| q.predicate.clone()).collect();
    let masks = filter_masks(exec, attributes, &predicates)?;
    let vectors: Vec<&[f32]> = queries.iter().map(|q| q.vector.as_slice()).collect();
    let ks: Vec<usize> = queries.iter().map(|q| q.k).collect();
    let t = opts.threshold_override.unwrap_or(t);
    let mut plan = select_partitions(exec, coarse, &masks, &vectors, t, &ks);
    if opts.rebalance {
        let target = opts.rebalance_target_for(&plan);
        plan = rebalance_batch(plan, coarse, masks.as_slice(), target);
    }
    Ok((masks, plan))
}

pub fn search_batch(
    exec: Exec,
    index: &HybridIndex,
    store: &dyn VectorStore,
    queries: &[HybridQuery],
    opts: &QueryOptions,
) -> Result<Vec<ResultSet>> {
    let (_, plan) = plan_batch(exec, index, queries, opts)?;
    let jobs: Vec<(usize, &Visit)> = plan
        .visits
        .iter()
        .enumerate()
        .flat_map(|(p, vs)| vs.iter().map(move |v| (p, v)))
        .collect();
    let partials = par::map_slice(exec, &jobs, |&(p, v)| {
        let q = &queries[v.query];
        let params = opts.params(q.k);
        params.validate()?;
        search_partition(&index.parts[p], &q.vector, &v.candidates, &params, store).map(|r| r.0)
    });
    let mut per_query: Vec<Vec<ResultSet>> = vec![Vec::new(); queries.len()];
    for (&(_, v), r) in jobs.iter().zip(partials) {
        per_query[v.query].push(r?);
    }
    Ok(per_query
        .iter()
        .zip(queries)
        .map(|(parts, q)| merge_results(parts, q.k))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Neighbor;
    use crate::partitioner::PartitionSet;

    fn line_coarse() -> CoarseIndex {
        // 1-D centroids at 0, 2 and 20 with two vectors each
        let set = PartitionSet::from_assignment(1, vec![0.0, 2.0, 20.0], vec![0, 0, 1, 1, 2, 2])
            .unwrap();
        CoarseIndex::new(set)
    }

    #[test]
    fn ratio_rule_prunes_far_partitions() {
        // distances 10, 12, 30 → ratios 1, 1.2, 3
        let coarse = line_coarse();
        let masks = vec![Bitmap::ones(6)];
        let q = [-10.0f32];
        let plan = select_partitions(Exec::Sequential, &coarse, &masks, &[&q], 1.3, &[1]);
        assert_eq!(plan.loads(), vec![1, 1, 0]);
        assert_eq!(plan.pruned[0], vec![(2, 3.0)]);
    }

    #[test]
    fn scan_continues_until_k_candidates() {
        let coarse = line_coarse();
        // the only match lives in the farthest partition
        let masks = vec![Bitmap::from_indices(6, [5])];
        let q = [-10.0f32];
        let plan = select_partitions(Exec::Sequential, &coarse, &masks, &[&q], 1.0, &[1]);
        assert_eq!(plan.loads(), vec![0, 0, 1]);
        assert_eq!(plan.visits[2][0].candidates.to_indices(), vec![1]);
        let empty = select_partitions(Exec::Sequential, &coarse, &[Bitmap::zeros(6)], &[&q], 1.0, &[1]);
        assert_eq!(empty.total_visits(), 0);
    }

    #[test]
    fn rebalance_adds_narrowest_pruned() {
        let coarse = line_coarse();
        let mut plan = PartitionPlan {
            visits: vec![Vec::new(); 3],
            pruned: vec![
                vec![(1, 2.0)],
                vec![(1, 1.31)],
                vec![(1, 3.0)],
                vec![(1, 1.4)],
            ],
        };
        plan.visits[0] = (0..4)
            .map(|q| Visit {
                query: q,
                candidates: Bitmap::ones(2),
                ratio: 1.0,
            })
            .collect();
        let masks = vec![Bitmap::ones(6); 4];
        let out = rebalance_batch(plan.clone(), &coarse, &masks, 2);
        let added: Vec<usize> = out.visits[1].iter().map(|v| v.query).collect();
        assert_eq!(added, vec![1, 3]);
        assert_eq!(out.visits[0], plan.visits[0]);
        // already balanced at target 0
        assert_eq!(rebalance_batch(plan.clone(), &coarse, &masks, 0), plan);
    }

    #[test]
    fn merge_examples() {
        let a = ResultSet {
            entries: vec![Neighbor { id: 1, distance: 1.0 }, Neighbor { id: 3, distance: 3.0 }],
        };
        let b = ResultSet {
            entries: vec![Neighbor { id: 2, distance: 2.0 }],
        };
        assert_eq!(merge_results(&[a.clone(), b], 2).ids(), vec![1, 2]);
        assert_eq!(merge_results(std::slice::from_ref(&a), 1).ids(), vec![1]);
    }
}
