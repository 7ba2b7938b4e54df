//! Vector datasets, attribute tables, hybrid queries and the brute-force oracle.

mod attributes;
mod io;
mod oracle;
mod predicate;
pub mod synth;

pub use attributes::{
    generate_attributes, generate_attributes_with_kinds, AttributeColumn, AttributeKind,
    AttributeTable, CATEGORICAL_LABELS, NUMERIC_RANGE,
};
pub use io::{
    load_vectors, read_ivecs, read_vecs, write_bvecs, write_fvecs, write_ivecs, VecFormat,
};
pub use oracle::{
    brute_force_batch, brute_force_masked, brute_force_search, recall_at_k, selectivity,
};
pub use predicate::{AttrClause, CmpOp, HybridQuery, Operand, QueryPredicate};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `n × d` matrix of vectors with their global ids.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorDataset {
    d: usize,
    values: Vec<f32>,
    ids: Vec<u32>,
}

impl VectorDataset {
    /// Dataset with dense ids `0..n`.
    pub fn new(d: usize, values: Vec<f32>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Format("dimension must be at least 1".into()));
        }
        if values.is_empty() || !values.len().is_multiple_of(d) {
            return Err(Error::Format(format!(
                "{} values do not form rows of dimension {d}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "non-finite value in row {}",
                pos / d
            )));
        }
        let n = values.len() / d;
        Ok(Self {
            d,
            values,
            ids: (0..n as u32).collect(),
        })
    }

    /// Dataset whose rows carry explicit ids (a permutation of `0..n`).
    pub fn with_ids(d: usize, values: Vec<f32>, ids: Vec<u32>) -> Result<Self> {
        let mut ds = Self::new(d, values)?;
        if ids.len() != ds.n() {
            return Err(Error::Format(format!(
                "{} ids for {} rows",
                ids.len(),
                ds.n()
            )));
        }
        let mut seen = vec![false; ids.len()];
        for &id in &ids {
            let slot = seen
                .get_mut(id as usize)
                .ok_or_else(|| Error::Format(format!("id {id} is not dense")))?;
            if *slot {
                return Err(Error::Format(format!("duplicate id {id}")));
            }
            *slot = true;
        }
        ds.ids = ids;
        Ok(ds)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// True when row `i` carries id `i` for every row.
    pub fn has_identity_ids(&self) -> bool {
        self.ids.iter().enumerate().all(|(i, &id)| id as usize == i)
    }

    /// First `n` rows (ids renumbered densely).
    pub fn truncate(&self, n: usize) -> Result<Self> {
        let n = n.min(self.n());
        Self::new(self.d, self.values[..n * self.d].to_vec())
    }
}

/// One `(id, distance)` entry of a result list.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u32,
    /// Euclidean distance (not squared).
    pub distance: f64,
}

impl Neighbor {
    /// Total order used everywhere results are ranked: distance, then id.
    #[inline]
    pub fn cmp_rank(&self, other: &Self) -> std::cmp::Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.id.cmp(&other.id))
    }
}

/// Up to `k` neighbors, ascending by distance with ties broken by id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub entries: Vec<Neighbor>,
}

impl ResultSet {
    pub fn new(mut entries: Vec<Neighbor>, k: usize) -> Self {
        entries.sort_by(Neighbor::cmp_rank);
        entries.truncate(k);
        Self { entries }
    }

    pub fn ids(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.id).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Squared Euclidean distance accumulated in `f64`, left to right.
#[inline]
pub fn l2_squared(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let t = *x as f64 - *y as f64;
        acc += t * t;
    }
    acc
}
