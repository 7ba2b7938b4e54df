//! Synthetic vectors and predicate workloads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{AttrClause, HybridQuery, QueryPredicate, VectorDataset, NUMERIC_RANGE};
use crate::error::{Error, Result};

/// Gaussian mixture on a low-dimensional latent space, linearly embedded in
/// `d` dimensions with a decaying spectrum plus isotropic noise. Gives
/// benchmark-like neighbor structure (low intrinsic dimension) at any `d`.
#[derive(Clone, Debug)]
pub struct ClusteredModel {
    d: usize,
    latent: usize,
    centers: Vec<Vec<f64>>,
    /// `d × latent`, row-major.
    embed: Vec<f64>,
    noise: f64,
}

impl ClusteredModel {
    pub fn new(d: usize, latent: usize, clusters: usize, seed: u64) -> Result<Self> {
        if d == 0 || latent == 0 || clusters == 0 {
            return Err(Error::Config("synthetic model sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = (0..clusters)
            .map(|_| {
                (0..latent)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        3.0 * e
                    })
                    .collect::<Vec<f64>>()
            })
            .collect();
        let embed = (0..d * latent)
            .map(|i| {
                let col = i % latent;
                let scale = 1.0 / (1.0 + col as f64).sqrt();
                let e: f64 = StandardNormal.sample(&mut rng);
                scale * e
            })
            .collect();
        Ok(Self {
            d,
            latent,
            centers,
            embed,
            noise: 0.05,
        })
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<VectorDataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(n * self.d);
        let mut z = vec![0.0f64; self.latent];
        for _ in 0..n {
            let c = &self.centers[rng.random_range(0..self.centers.len())];
            for (zi, ci) in z.iter_mut().zip(c) {
                let e: f64 = StandardNormal.sample(&mut rng);
                *zi = ci + e;
            }
            for row in self.embed.chunks_exact(self.latent) {
                let mut x: f64 = row.iter().zip(&z).map(|(w, zi)| w * zi).sum();
                let e: f64 = StandardNormal.sample(&mut rng);
                x += self.noise * e;
                values.push(x as f32);
            }
        }
        VectorDataset::new(self.d, values)
    }
}

/// Uniform `[0,1)` vectors.
pub fn uniform_vectors(n: usize, d: usize, seed: u64) -> Result<VectorDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VectorDataset::new(d, (0..n * d).map(|_| rng.random::<f32>()).collect())
}

/// Between-clauses on every numeric attribute whose operands are drawn from
/// that attribute's quantization boundaries, each spanning `span_cells`
/// consecutive cells (one of the two values, chosen uniformly). With aligned
/// operands the raw-value and cell-level predicate semantics coincide.
///
/// `boundaries[a]` is `None` for attributes to leave unconstrained.
pub fn aligned_predicate(
    rng: &mut impl Rng,
    boundaries: &[Option<&[f64]>],
    span_cells: (usize, usize),
) -> QueryPredicate {
    let clauses = boundaries
        .iter()
        .enumerate()
        .filter_map(|(a, b)| {
            let b = (*b)?;
            let cells = b.len() - 1;
            let span = if rng.random_bool(0.5) {
                span_cells.0
            } else {
                span_cells.1
            }
            .clamp(1, cells);
            let start = rng.random_range(0..=cells - span);
            Some(AttrClause::between(a, b[start], b[start + span]))
        })
        .collect();
    QueryPredicate::new(clauses).expect("aligned clauses are ordered")
}

/// Between-clauses of width `pass_fraction` of [`NUMERIC_RANGE`] at uniform
/// offsets, one per attribute in `attrs`.
pub fn uniform_predicate(rng: &mut impl Rng, attrs: &[usize], pass_fraction: f64) -> QueryPredicate {
    let (lo, hi) = NUMERIC_RANGE;
    let width = (hi - lo) * pass_fraction.clamp(0.0, 1.0);
    let clauses = attrs
        .iter()
        .map(|&a| {
            let start = lo + rng.random::<f64>() * (hi - lo - width);
            AttrClause::between(a, start, start + width)
        })
        .collect();
    QueryPredicate::new(clauses).expect("uniform clauses are ordered")
}

/// Pairs each row of `vectors` with a predicate from `make_predicate`.
pub fn make_queries(
    vectors: &VectorDataset,
    k: usize,
    mut make_predicate: impl FnMut(usize) -> QueryPredicate,
) -> Vec<HybridQuery> {
    (0..vectors.n())
        .map(|i| HybridQuery {
            vector: vectors.row(i).to_vec(),
            predicate: make_predicate(i),
            k,
        })
        .collect()
}
