//! Per-partition scan: Hamming pruning on sign bits, lower-bound distances
//! from the per-query lookup table, then exact refinement of the best few.

use serde::{Deserialize, Serialize};

use super::store::VectorStore;
use crate::bitmap::Bitmap;
use crate::dataset::{l2_squared, Neighbor, ResultSet};
use crate::error::{Error, Result};
use crate::index::PartitionIndex;
use crate::osq::{hamming, ExtractPlan, LowBitIndex, SegmentMatrix};
use crate::quantizer::{cell_of, BitAllocation, QuantBoundaries};

/// Query-time knobs of the partition scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub k: usize,
    /// Percentage of candidates kept after Hamming ranking, in `(0, 100]`.
    pub h_perc: f64,
    /// Refinement factor `R`; `⌈R · k⌉` candidates are re-ranked exactly.
    pub refine_factor: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            k: 10,
            h_perc: 10.0,
            refine_factor: 2.0,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.h_perc > 0.0 && self.h_perc <= 100.0) {
            return Err(Error::Config(format!("h_perc {} outside (0, 100]", self.h_perc)));
        }
        if !(self.refine_factor >= 1.0) {
            return Err(Error::Config(format!(
                "refinement factor {} below 1",
                self.refine_factor
            )));
        }
        Ok(())
    }

    /// Number of exact distance evaluations for `candidates` survivors.
    pub fn refine_count(&self, candidates: usize) -> usize {
        let want = (self.refine_factor * self.k as f64 - 1e-9).ceil() as usize;
        want.max(self.k).min(candidates)
    }
}

/// `⌈count · h_perc / 100⌉`, robust to float noise at integral products.
pub fn keep_count(count: usize, h_perc: f64) -> usize {
    let x = count as f64 * h_perc / 100.0;
    let keep = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.ceil()
    };
    (keep as usize).min(count)
}

/// Keeps the candidates closest to `q_bits` in Hamming distance (ties by
/// row, which orders like global id). Output is ascending by row.
pub fn hamming_prune(candidates: &[usize], lowbit: &LowBitIndex, q_bits: &[u8], h_perc: f64) -> Vec<usize> {
    let keep = keep_count(candidates.len(), h_perc);
    if keep == candidates.len() {
        return candidates.to_vec();
    }
    let d = lowbit.d();
    let mut scored: Vec<(u32, usize)> = candidates
        .iter()
        .map(|&r| (hamming(lowbit.row(r), q_bits, d), r))
        .collect();
    if keep > 0 {
        scored.select_nth_unstable(keep - 1);
    }
    scored.truncate(keep);
    let mut rows: Vec<usize> = scored.into_iter().map(|(_, r)| r).collect();
    rows.sort_unstable();
    rows
}

/// Per-dimension table of squared distances from the query coordinate to
/// each cell (0 for the query's own cell). Rows are ragged: dimension `j`
/// holds exactly its live cells.
#[derive(Clone, Debug, PartialEq)]
pub struct AdcTable {
    offsets: Vec<usize>,
    entries: Vec<f64>,
}

impl AdcTable {
    /// Entry for cell `c` of dimension `j`.
    #[inline]
    pub fn get(&self, c: usize, j: usize) -> f64 {
        self.entries[self.offsets[j] + c]
    }

    #[inline]
    pub fn dim(&self, j: usize) -> &[f64] {
        &self.entries[self.offsets[j]..self.offsets[j + 1]]
    }

    pub fn d(&self) -> usize {
        self.offsets.len() - 1
    }
}

pub fn build_adc_table(y: &[f64], quantizers: &QuantBoundaries) -> AdcTable {
    let d = quantizers.d();
    let mut offsets = Vec::with_capacity(d + 1);
    let mut entries = Vec::new();
    offsets.push(0);
    for (j, &q) in y.iter().enumerate().take(d) {
        let b = &quantizers.bounds[j];
        let own = cell_of(b, q);
        for c in 0..quantizers.cells(j) {
            let e = match c.cmp(&own) {
                std::cmp::Ordering::Equal => 0.0,
                std::cmp::Ordering::Less => (q - b[c + 1]) * (q - b[c + 1]),
                std::cmp::Ordering::Greater => (b[c] - q) * (b[c] - q),
            };
            entries.push(e);
        }
        offsets.push(entries.len());
    }
    AdcTable { offsets, entries }
}

/// Squared lower-bound distance of each row: dimension by dimension, the
/// code is extracted for every row and its table entry accumulated.
pub fn lb_distances(table: &AdcTable, segments: &SegmentMatrix, alloc: &BitAllocation, rows: &[usize]) -> Vec<f64> {
    let plan = ExtractPlan::new(alloc);
    let mut acc = vec![0.0f64; rows.len()];
    for j in 0..alloc.d() {
        let t = table.dim(j);
        if plan.pieces(j).is_empty() {
            let e = t[0];
            acc.iter_mut().for_each(|a| *a += e);
            continue;
        }
        for (a, &r) in acc.iter_mut().zip(rows) {
            *a += t[plan.extract(segments.row(r), j) as usize];
        }
    }
    acc
}

/// A row that survived pruning, with its bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub row: usize,
    pub id: u32,
    /// Squared lower bound.
    pub lb: f64,
    /// Exact Euclidean distance once refined.
    pub exact: Option<f64>,
}

/// Exact distances for the first `⌈R·k⌉` candidates (sorted by `lb`), then
/// the top `k`.
pub fn refine(
    top: &[Candidate],
    params: &SearchParams,
    query: &[f32],
    store: &dyn VectorStore,
) -> Result<(ResultSet, usize)> {
    let m = params.refine_count(top.len());
    let mut buf = vec![0.0f32; store.d()];
    let mut out = Vec::with_capacity(m);
    for c in &top[..m] {
        store.read(c.id, &mut buf)?;
        out.push(Neighbor {
            id: c.id,
            distance: l2_squared(&buf, query).sqrt(),
        });
    }
    Ok((ResultSet::new(out, params.k), m))
}

/// Counters of one partition scan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanStats {
    pub candidates: usize,
    pub retained: usize,
    pub refined: usize,
}

/// Hamming prune → lower bounds → exact refinement over `candidates`
/// (local rows of `part`).
pub fn search_partition(
    part: &PartitionIndex,
    query: &[f32],
    candidates: &Bitmap,
    params: &SearchParams,
    store: &dyn VectorStore,
) -> Result<(ResultSet, ScanStats)> {
    if candidates.len() != part.n() {
        return Err(Error::DimensionMismatch {
            expected: part.n(),
            actual: candidates.len(),
        });
    }
    if query.len() != part.d() {
        return Err(Error::DimensionMismatch {
            expected: part.d(),
            actual: query.len(),
        });
    }
    let rows = candidates.to_indices();
    let y = part.transform_query(query);
    let q_bits = part.query_bits(&y);
    let kept = hamming_prune(&rows, &part.lowbit, &q_bits, params.h_perc);
    let table = build_adc_table(&y, &part.quantizers);
    let lbs = lb_distances(&table, &part.segments, &part.alloc, &kept);
    let mut ranked: Vec<Candidate> = kept
        .iter()
        .zip(lbs)
        .map(|(&row, lb)| Candidate {
            row,
            id: part.global_ids[row],
            lb,
            exact: None,
        })
        .collect();
    ranked.sort_by(|a, b| a.lb.total_cmp(&b.lb).then(a.id.cmp(&b.id)));
    let (rs, refined) = refine(&ranked, params, query, store)?;
    Ok((
        rs,
        ScanStats {
            candidates: rows.len(),
            retained: kept.len(),
            refined,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_counts() {
        assert_eq!(keep_count(500, 10.0), 50);
        assert_eq!(keep_count(7, 100.0), 7);
        assert_eq!(keep_count(7, 10.0), 1);
        assert_eq!(keep_count(0, 10.0), 0);
        let p = SearchParams::default();
        assert_eq!(p.refine_count(100), 20);
        assert_eq!(p.refine_count(5), 5);
    }

    #[test]
    fn table_example() {
        let q = QuantBoundaries {
            bounds: vec![vec![0.0, 5.0, 10.0, 15.0], vec![1.0, 2.0]],
            centroids: vec![vec![], vec![]],
            degenerate: vec![false, false],
        };
        let t = build_adc_table(&[7.0, 1.5], &q);
        assert_eq!(t.dim(0), &[4.0, 0.0, 9.0]);
        assert_eq!(t.dim(1), &[0.0]);
    }

    #[test]
    fn prune_keeps_nearest_codes() {
        let lb = crate::osq::build_lowbit(
            &[1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0, -1.0, -1.0, -1.0, -1.0, -1.0],
            4,
            8,
        )
        .unwrap();
        let q = crate::osq::binarize(&[1.0, 1.0, 1.0, 1.0], 8);
        // rows have 2, 2 and 4 zero bits
        assert_eq!(hamming_prune(&[0, 1, 2], &lb, &q, 50.0), vec![0, 1]);
        assert_eq!(hamming_prune(&[0, 1, 2], &lb, &q, 30.0), vec![0]);
        assert_eq!(hamming_prune(&[0, 1, 2], &lb, &q, 100.0), vec![0, 1, 2]);
    }
}
