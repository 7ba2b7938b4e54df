//! Request and response payloads exchanged between instances.
//!
//! Payloads are JSON. Vectors travel as raw `f32` bit patterns so they
//! arrive bit-identical; distances are `f64` and round-trip exactly.
//!
//! ```text
//! AllocatorRequest  { version, id, level, n_dispatched, queries: [WireQuery] }
//! AllocatorResponse { id, results: [QueryResult], records, failures, retries }
//! ProcessorRequest  { version, allocator, partition, params, items: [ProcessorItem] }
//! ProcessorResponse { partition, results: [QueryResult], record }
//! WireQuery         { index, vector_bits: [u32], predicate, k }
//! ProcessorItem     { index, vector_bits: [u32], k, candidates: Bitmap over local rows }
//! QueryResult       { index, entries: [{ id, distance }], partial }
//! ```

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::report::InstanceRecord;
use crate::bitmap::Bitmap;
use crate::dataset::{HybridQuery, Neighbor, QueryPredicate};
use crate::error::Result;
use crate::search::QueryOptions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireQuery {
    /// Position in the dispatched batch.
    pub index: usize,
    pub vector_bits: Vec<u32>,
    pub predicate: QueryPredicate,
    pub k: usize,
}

impl WireQuery {
    pub fn new(index: usize, q: &HybridQuery) -> Self {
        Self {
            index,
            vector_bits: q.vector.iter().map(|x| x.to_bits()).collect(),
            predicate: q.predicate.clone(),
            k: q.k,
        }
    }

    pub fn to_query(&self) -> HybridQuery {
        HybridQuery {
            vector: self.vector_bits.iter().map(|&b| f32::from_bits(b)).collect(),
            predicate: self.predicate.clone(),
            k: self.k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocatorRequest {
    pub version: String,
    pub id: usize,
    pub level: u32,
    /// Size of the whole dispatched batch, used to split it by allocator.
    pub n_dispatched: usize,
    pub options: QueryOptions,
    /// Queries for this allocator's subtree.
    pub queries: Vec<WireQuery>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub index: usize,
    pub entries: Vec<Neighbor>,
    pub partial: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocatorResponse {
    pub id: usize,
    pub results: Vec<QueryResult>,
    /// This allocator's record followed by everything it invoked.
    pub records: Vec<InstanceRecord>,
    pub failures: Vec<String>,
    pub retries: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessorItem {
    pub index: usize,
    pub vector_bits: Vec<u32>,
    pub k: usize,
    pub candidates: Bitmap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessorRequest {
    pub version: String,
    pub allocator: usize,
    pub partition: usize,
    pub h_perc: f64,
    pub refine_factor: f64,
    pub items: Vec<ProcessorItem>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessorResponse {
    pub partition: usize,
    pub results: Vec<QueryResult>,
    pub record: InstanceRecord,
}

pub fn encode<T: Serialize>(msg: &T) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec(msg)?)
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    Ok(serde_json::from_slice(bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_and_distances_round_trip() {
        let q = HybridQuery {
            vector: vec![0.1, -3.4e-38, f32::MIN_POSITIVE, 1.0 / 3.0],
            predicate: QueryPredicate::empty(),
            k: 2,
        };
        let w = WireQuery::new(7, &q);
        let back: WireQuery = decode(&encode(&w).unwrap()).unwrap();
        assert_eq!(back.to_query(), q);
        let r = QueryResult {
            index: 0,
            entries: vec![Neighbor {
                id: 1,
                distance: 0.1 + 0.2,
            }],
            partial: false,
        };
        let back: QueryResult = decode(&encode(&r).unwrap()).unwrap();
        assert_eq!(back.entries[0].distance.to_bits(), r.entries[0].distance.to_bits());
    }
}
