//! Exact-match result cache.

use std::collections::HashMap;

use crate::dataset::{HybridQuery, ResultSet};
use crate::error::Result;

/// Bytes identifying a query: `k`, the raw vector bits and the predicate.
pub fn fingerprint(q: &HybridQuery) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + q.vector.len() * 4 + 32);
    out.extend_from_slice(&(q.k as u64).to_le_bytes());
    for x in &q.vector {
        out.extend_from_slice(&x.to_bits().to_le_bytes());
    }
    out.extend_from_slice(&serde_json::to_vec(&q.predicate)?);
    Ok(out)
}

#[derive(Debug, Default)]
pub struct ResultCache {
    entries: HashMap<Vec<u8>, ResultSet>,
    hits: u64,
    misses: u64,
}

impl ResultCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lookup(&mut self, key: &[u8]) -> Option<ResultSet> {
        match self.entries.get(key) {
            Some(r) => {
                self.hits += 1;
                Some(r.clone())
            }
            None => {
                self.misses += 1;
                None
            }
        }
    }

    pub fn insert(&mut self, key: Vec<u8>, result: ResultSet) {
        self.entries.insert(key, result);
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
