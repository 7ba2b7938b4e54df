//! Greedy bit allocation, 1-D Lloyd quantizer design and cell coding.

use serde::{Deserialize, Serialize};

use crate::dataset::{AttributeColumn, AttributeTable};
use crate::error::{Error, Result};
use crate::hybrid_filter::AttributeQIndex;
use crate::par::{self, Exec};

/// Upper bound on bits the greedy allocator gives one dimension. Keeps the
/// per-query lookup table (`2^B` rows) bounded.
pub const MAX_ALLOCATED_BITS: u32 = 16;

pub const LLOYD_MAX_ITER: usize = 100;
pub const LLOYD_TOL: f64 = 1e-7;

/// Per-dimension bit counts and the segment width they are packed into.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitAllocation {
    pub bits: Vec<u32>,
    pub segment_size: u32,
}

impl BitAllocation {
    pub fn new(bits: Vec<u32>, segment_size: u32) -> Result<Self> {
        if !(1..=64).contains(&segment_size) {
            return Err(Error::Allocation(format!(
                "segment size {segment_size} outside 1..=64"
            )));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 64) {
            return Err(Error::Allocation(format!("{b} bits exceed a 64-bit code")));
        }
        Ok(Self { bits, segment_size })
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.bits.len()
    }

    /// `b = Σ B[j]`.
    pub fn total_budget(&self) -> u64 {
        self.bits.iter().map(|&b| b as u64).sum()
    }

    /// `C[j] = 2^B[j]`.
    pub fn cells(&self, j: usize) -> u128 {
        1u128 << self.bits[j]
    }

    /// `M = max C[j]`.
    pub fn max_cells(&self) -> u128 {
        self.bits.iter().map(|&b| 1u128 << b).max().unwrap_or(1)
    }

    /// Segments per vector, `⌈b / S⌉`.
    pub fn segments(&self) -> usize {
        self.total_budget().div_ceil(self.segment_size as u64) as usize
    }
}

/// Repeatedly gives one bit to the dimension with the largest working
/// variance (lowest index on ties) and divides that variance by 4.
pub fn allocate_bits(variances: &[f64], budget: u32, segment_size: u32) -> Result<BitAllocation> {
    if variances.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Allocation("variances must be finite and non-negative".into()));
    }
    let d = variances.len();
    if budget as u64 > d as u64 * MAX_ALLOCATED_BITS as u64 {
        return Err(Error::Allocation(format!(
            "budget {budget} exceeds {MAX_ALLOCATED_BITS} bits for each of {d} dimensions"
        )));
    }
    let mut work = variances.to_vec();
    let mut bits = vec![0u32; d];
    for _ in 0..budget {
        let mut best: Option<usize> = None;
        for j in 0..d {
            if bits[j] >= MAX_ALLOCATED_BITS {
                continue;
            }
            if best.is_none_or(|b| work[j] > work[b]) {
                best = Some(j);
            }
        }
        let j = match best {
            Some(j) if work[j] > 0.0 => j,
            _ => {
                return Err(Error::Allocation(
                    "no dimension with positive variance left to take a bit".into(),
                ))
            }
        };
        bits[j] += 1;
        work[j] /= 4.0;
    }
    BitAllocation::new(bits, segment_size)
}

/// Outcome of a 1-D Lloyd fit.
#[derive(Clone, Debug, PartialEq)]
pub struct LloydFit {
    /// Ascending, distinct.
    pub centroids: Vec<f64>,
    /// `centroids.len() + 1` values: data min, interior midpoints, data max.
    pub boundaries: Vec<f64>,
    pub iterations: usize,
    /// Fewer distinct values than requested cells.
    pub degenerate: bool,
    /// Within-cell squared error after each iteration.
    pub objective: Vec<f64>,
}

/// 1-D k-means on `values` with `c` cells, quantile-initialized.
pub fn lloyd_1d(values: &[f64], c: usize, tol: f64, max_iter: usize) -> Result<LloydFit> {
    if values.is_empty() || c == 0 {
        return Err(Error::InsufficientData(
            "lloyd_1d needs at least one value and one cell".into(),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InsufficientData("non-finite training value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let mut distinct = sorted.clone();
    distinct.dedup();

    if c >= distinct.len() {
        let boundaries = boundaries_from(&distinct, lo, hi);
        return Ok(LloydFit {
            objective: vec![0.0],
            centroids: distinct.clone(),
            boundaries,
            iterations: 0,
            degenerate: c > distinct.len(),
        });
    }

    let n = sorted.len();
    let mut prefix = Vec::with_capacity(n + 1);
    let mut prefix_sq = Vec::with_capacity(n + 1);
    let (mut s, mut s2) = (0.0, 0.0);
    prefix.push(0.0);
    prefix_sq.push(0.0);
    for &x in &sorted {
        s += x;
        s2 += x * x;
        prefix.push(s);
        prefix_sq.push(s2);
    }

    let mut centroids: Vec<f64> = (0..c)
        .map(|i| sorted[(((i as f64 + 0.5) / c as f64) * n as f64) as usize])
        .collect();
    centroids.dedup();
    if centroids.len() < c {
        let m = distinct.len();
        centroids = (0..c)
            .map(|i| distinct[(((i as f64 + 0.5) / c as f64) * m as f64) as usize])
            .collect();
    }

    let mut splits = vec![0usize; c + 1];
    let mut objective = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut next = vec![0usize; c + 1];
        next[c] = n;
        for i in 1..c {
            let mid = 0.5 * (centroids[i - 1] + centroids[i]);
            next[i] = sorted.partition_point(|&x| x < mid);
        }
        let mut shift: f64 = 0.0;
        let mut sse = 0.0;
        for i in 0..c {
            let (a, b) = (next[i], next[i + 1]);
            if b > a {
                let cnt = (b - a) as f64;
                let sum = prefix[b] - prefix[a];
                let mean = sum / cnt;
                shift = shift.max((mean - centroids[i]).abs());
                centroids[i] = mean;
                sse += (prefix_sq[b] - prefix_sq[a]) - sum * mean;
            }
        }
        objective.push(sse.max(0.0));
        // an empty cell keeps its centroid, which may break the order
        centroids.sort_by(f64::total_cmp);
        let unchanged = next == splits;
        splits = next;
        if unchanged || shift < tol {
            break;
        }
    }
    let before = centroids.len();
    centroids.dedup();
    let boundaries = boundaries_from(&centroids, lo, hi);
    Ok(LloydFit {
        degenerate: centroids.len() < before,
        centroids,
        boundaries,
        iterations,
        objective,
    })
}

fn boundaries_from(centroids: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut b = Vec::with_capacity(centroids.len() + 1);
    b.push(lo);
    for w in centroids.windows(2) {
        b.push(0.5 * (w[0] + w[1]));
    }
    b.push(hi);
    b
}

/// Cell index of `v` for one dimension's ascending `bounds`
/// (`[bound_k, bound_{k+1})`, clamped at both ends).
#[inline]
pub fn cell_of(bounds: &[f64], v: f64) -> usize {
    let c = bounds.len() - 1;
    bounds[1..c].partition_point(|&b| b <= v)
}

/// Designed scalar quantizers for every dimension of one partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantBoundaries {
    /// `bounds[j]` has `cells(j) + 1` ascending entries.
    pub bounds: Vec<Vec<f64>>,
    pub centroids: Vec<Vec<f64>>,
    pub degenerate: Vec<bool>,
}

impl QuantBoundaries {
    #[inline]
    pub fn d(&self) -> usize {
        self.bounds.len()
    }

    /// Live cells in dimension `j` (at most `2^B[j]`).
    #[inline]
    pub fn cells(&self, j: usize) -> usize {
        self.bounds[j].len() - 1
    }

    pub fn max_cells(&self) -> usize {
        (0..self.d()).map(|j| self.cells(j)).max().unwrap_or(1)
    }
}

/// Fits one Lloyd quantizer per dimension of the `n × d` matrix with
/// `2^B[j]` cells (capped by the distinct value count).
pub fn design_quantizers(
    exec: Exec,
    rows: &[f64],
    alloc: &BitAllocation,
) -> Result<QuantBoundaries> {
    let d = alloc.d();
    if d == 0 || rows.is_empty() || !rows.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: rows.len() % d.max(1),
        });
    }
    if alloc.bits.iter().any(|&b| b > MAX_ALLOCATED_BITS) {
        return Err(Error::Allocation(format!(
            "quantizer design supports at most {MAX_ALLOCATED_BITS} bits per dimension"
        )));
    }
    let fits = par::map_range(exec, d, |j| {
        let col: Vec<f64> = rows.iter().skip(j).step_by(d).copied().collect();
        lloyd_1d(&col, 1usize << alloc.bits[j], LLOYD_TOL, LLOYD_MAX_ITER)
    });
    let mut out = QuantBoundaries {
        bounds: Vec::with_capacity(d),
        centroids: Vec::with_capacity(d),
        degenerate: Vec::with_capacity(d),
    };
    for fit in fits {
        let fit = fit?;
        out.bounds.push(fit.boundaries);
        out.centroids.push(fit.centroids);
        out.degenerate.push(fit.degenerate);
    }
    Ok(out)
}

/// Row-major `n × d` cell codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeMatrix {
    pub n: usize,
    pub d: usize,
    pub codes: Vec<u64>,
}

impl CodeMatrix {
    pub fn new(n: usize, d: usize, codes: Vec<u64>) -> Result<Self> {
        if codes.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                actual: codes.len(),
            });
        }
        Ok(Self { n, d, codes })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.codes[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.codes[i * self.d + j]
    }

    pub fn column(&self, j: usize) -> Vec<u64> {
        self.codes.iter().skip(j).step_by(self.d).copied().collect()
    }
}

pub fn quantize(exec: Exec, rows: &[f64], boundaries: &QuantBoundaries) -> Result<CodeMatrix> {
    let d = boundaries.d();
    if d == 0 || !rows.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: rows.len() % d.max(1),
        });
    }
    let n = rows.len() / d;
    let chunks = par::map_row_chunks(exec, n, 4096, |range| {
        let mut out = Vec::with_capacity(range.len() * d);
        for i in range {
            for (j, &v) in rows[i * d..(i + 1) * d].iter().enumerate() {
                out.push(cell_of(&boundaries.bounds[j], v) as u64);
            }
        }
        out
    });
    CodeMatrix::new(n, d, chunks.concat())
}

/// Default numeric resolution and the cap shared with categorical columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrQuantConfig {
    /// Cells per numeric attribute, reduced to its distinct value count.
    pub numeric_cells: usize,
    /// Largest cell count any attribute may have.
    pub max_cells: usize,
}

impl Default for AttrQuantConfig {
    fn default() -> Self {
        Self {
            numeric_cells: 16,
            max_cells: 256,
        }
    }
}

/// Lloyd cells for numeric attributes, one cell per distinct label for
/// categorical ones.
pub fn quantize_attributes(
    exec: Exec,
    attrs: &AttributeTable,
    cfg: AttrQuantConfig,
) -> Result<AttributeQIndex> {
    if cfg.numeric_cells == 0 || cfg.numeric_cells > cfg.max_cells {
        return Err(Error::Config(format!(
            "numeric attribute cells must be in 1..={}",
            cfg.max_cells
        )));
    }
    let columns = par::map_slice(exec, attrs.columns(), |col| -> Result<_> {
        match col {
            AttributeColumn::Numeric(v) => {
                let fit = lloyd_1d(v, cfg.numeric_cells, LLOYD_TOL, LLOYD_MAX_ITER)?;
                let codes = v
                    .iter()
                    .map(|&x| cell_of(&fit.boundaries, x) as u32)
                    .collect();
                Ok((fit.boundaries, codes, None))
            }
            AttributeColumn::Categorical { labels, codes } => {
                if labels.len() > cfg.max_cells {
                    return Err(Error::Capacity(format!(
                        "{} categorical values exceed {} cells",
                        labels.len(),
                        cfg.max_cells
                    )));
                }
                let bounds = (0..=labels.len()).map(|c| c as f64).collect();
                Ok((bounds, codes.clone(), Some(labels.clone())))
            }
        }
    });
    let mut bounds = Vec::with_capacity(columns.len());
    let mut codes = Vec::with_capacity(columns.len());
    let mut labels = Vec::with_capacity(columns.len());
    for c in columns {
        let (b, k, l) = c?;
        bounds.push(b);
        codes.push(k);
        labels.push(l);
    }
    AttributeQIndex::from_parts(attrs.n(), bounds, codes, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_attributes, AttributeKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_allocation_examples() {
        // hand trace: [4,1,1] → B0 (1,1,1) → B0 (.25,1,1) → B1 → B2
        assert_eq!(allocate_bits(&[4.0, 1.0, 1.0], 4, 8).unwrap().bits, vec![2, 1, 1]);
        let a = allocate_bits(&vec![1.0; 128], 512, 8).unwrap();
        assert_eq!(a.bits, vec![4; 128]);
        assert_eq!(a.segments(), 64);
        assert_eq!(allocate_bits(&[3.0, 2.0], 0, 8).unwrap().bits, vec![0, 0]);
        assert!(matches!(allocate_bits(&[0.0, 0.0], 1, 8), Err(Error::Allocation(_))));
    }

    #[test]
    fn allocation_respects_the_cap() {
        let a = allocate_bits(&[1e9, 1.0], 20, 8).unwrap();
        assert_eq!(a.bits, vec![16, 4]);
        assert!(allocate_bits(&[1.0], 17, 8).is_err());
    }

    #[test]
    fn lloyd_examples() {
        let f = lloyd_1d(&[0.0, 0.0, 10.0, 10.0, 0.0, 10.0], 2, LLOYD_TOL, LLOYD_MAX_ITER).unwrap();
        assert_eq!(f.centroids, vec![0.0, 10.0]);
        assert_eq!(f.boundaries, vec![0.0, 5.0, 10.0]);

        let f = lloyd_1d(&[1.0, 2.0, 6.0], 1, LLOYD_TOL, LLOYD_MAX_ITER).unwrap();
        assert_eq!(f.centroids, vec![3.0]);
        assert_eq!(f.boundaries, vec![1.0, 6.0]);

        let f = lloyd_1d(&[1.0, 1.0, 2.0], 4, LLOYD_TOL, LLOYD_MAX_ITER).unwrap();
        assert!(f.degenerate);
        assert_eq!(f.centroids, vec![1.0, 2.0]);
    }

    #[test]
    fn lloyd_on_uniform_matches_analytic_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let f = lloyd_1d(&v, 4, LLOYD_TOL, LLOYD_MAX_ITER).unwrap();
        for (c, want) in f.centroids.iter().zip([0.125, 0.375, 0.625, 0.875]) {
            assert!((c - want).abs() < 0.02, "{c} vs {want}");
        }
        assert!(f.objective.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn half_open_cells_with_clamping() {
        let b = [0.0, 5.0, 10.0];
        assert_eq!(cell_of(&b, 5.0), 1);
        assert_eq!(cell_of(&b, -3.0), 0);
        assert_eq!(cell_of(&b, 4.999), 0);
        assert_eq!(cell_of(&b, 10.0), 1);
        assert_eq!(cell_of(&b, 99.0), 1);
        assert_eq!(cell_of(&[2.0, 2.0], 7.0), 0);
    }

    #[test]
    fn codes_lie_in_their_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 5;
        let rows: Vec<f64> = (0..500 * d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let alloc = BitAllocation::new(vec![0, 1, 2, 3, 4], 8).unwrap();
        let qb = design_quantizers(Exec::Parallel, &rows, &alloc).unwrap();
        let cm = quantize(Exec::Parallel, &rows, &qb).unwrap();
        for i in 0..500 {
            for j in 0..d {
                let c = cm.get(i, j) as usize;
                let b = &qb.bounds[j];
                assert!(c < qb.cells(j) && qb.cells(j) <= 1 << alloc.bits[j]);
                let v = rows[i * d + j];
                assert!(c == 0 || b[c] <= v);
                assert!(c == qb.cells(j) - 1 || v < b[c + 1]);
            }
        }
    }

    #[test]
    fn more_bits_never_increase_reconstruction_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..2000).map(|_| rng.random::<f64>().powi(3)).collect();
        let mse = |bits: u32| {
            let f = lloyd_1d(&v, 1 << bits, LLOYD_TOL, LLOYD_MAX_ITER).unwrap();
            v.iter()
                .map(|&x| (x - f.centroids[cell_of(&f.boundaries, x)]).powi(2))
                .sum::<f64>()
                / v.len() as f64
        };
        let errs: Vec<f64> = (0..6).map(mse).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
    }

    #[test]
    fn attribute_quantization() {
        let attrs = AttributeTable::new(vec![
            AttributeColumn::Numeric(vec![0.0, 5.0, 10.0, 15.0, 20.0, 7.0]),
            AttributeColumn::categorical_from_labels(&["red", "green", "red", "red", "green", "green"]),
        ])
        .unwrap();
        let q = quantize_attributes(Exec::Sequential, &attrs, AttrQuantConfig::default()).unwrap();
        assert_eq!(q.kinds(), vec![AttributeKind::Numeric, AttributeKind::Categorical]);
        assert_eq!(q.cells(0), 6);
        assert_eq!(q.cells(1), 2);
        assert_eq!(q.labels(1).unwrap(), ["green".to_string(), "red".to_string()]);
        assert_eq!(q.codes(1), &[1, 0, 1, 1, 0, 0]);
        // padded rows of the narrower column
        for c in 3..=q.m() {
            assert_eq!(q.v(c, 1), f64::INFINITY);
        }

        let generated = generate_attributes(5000, 2, 3).unwrap();
        let q = quantize_attributes(Exec::Parallel, &generated, AttrQuantConfig::default()).unwrap();
        assert_eq!((q.cells(0), q.cells(1), q.m()), (16, 16, 16));
    }

    #[test]
    fn too_many_labels() {
        let labels: Vec<String> = (0..20).map(|i| format!("l{i}")).collect();
        let attrs =
            AttributeTable::new(vec![AttributeColumn::categorical_from_labels(&labels)]).unwrap();
        let cfg = AttrQuantConfig {
            numeric_cells: 16,
            max_cells: 16,
        };
        assert!(matches!(
            quantize_attributes(Exec::Sequential, &attrs, cfg),
            Err(Error::Capacity(_))
        ));
    }
}
