//! Hybrid (attribute-filtered) approximate nearest-neighbor search built on
//! optimized scalar quantization (OSQ).
//!
//! The crate is organised bottom-up:
//!
//! | Module | Role |
//! |--------|------|
//! | [`dataset`] | TexMex loaders, attribute tables, predicates, brute-force oracle |
//! | [`transform`] | Per-partition KLT rotation and standardization |
//! | [`quantizer`] | Greedy bit allocation, 1-D Lloyd quantizers, cell coding |
//! | [`osq`] | Shared-segment packing, dimensional extraction, low-bit index |
//! | [`hybrid_filter`] | Predicate lookup arrays and progressive AND filter masks |
//! | [`partitioner`] | Balanced coarse partitioning and the centroid distance threshold |
//! | [`search`] | Partition selection, Hamming pruning, ADC lower bounds, refinement, merge |
//! | [`index`] | Index build pipeline and on-disk formats |
//! | [`runtime`] | Simulated coordinator / allocator / processor fan-out |
//! | [`costmodel`] | Pricing of a simulated run |
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

// NaN must fail range checks, so `!(x >= 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bitmap;
pub mod costmodel;
pub mod dataset;
pub mod error;
pub mod hybrid_filter;
pub mod index;
pub mod osq;
pub mod par;
pub mod partitioner;
pub mod quantizer;
pub mod runtime;
pub mod search;
pub mod transform;

pub use bitmap::Bitmap;
pub use error::{Error, Result};
pub use par::Exec;
