//! Tree-shaped fan-out of allocator invocations with jump-size id assignment.
//!
//! The coordinator sits at level 0 and invokes `F` allocators at level 1;
//! every allocator above `l_max` invokes `F` more. Ids are handed out so the
//! subtree under an allocator is one contiguous id range starting at its own
//! id, which lets a parent split its queries among children by range.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Branching factor `F` and depth `l_max` of the allocator tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvocationConfig {
    pub fanout: usize,
    pub max_level: u32,
}

impl InvocationConfig {
    pub fn new(fanout: usize, max_level: u32) -> Result<Self> {
        if fanout < 2 {
            return Err(Error::Config(format!("fan-out {fanout} below 2")));
        }
        if max_level < 1 {
            return Err(Error::Config("tree depth must be at least 1".into()));
        }
        let c = Self { fanout, max_level };
        let mut total: u128 = 0;
        let mut pow: u128 = 1;
        for _ in 0..max_level {
            pow = pow.saturating_mul(fanout as u128);
            total = total.saturating_add(pow);
        }
        if total > u32::MAX as u128 {
            return Err(Error::Config(format!("tree ({fanout}, {max_level}) is too large")));
        }
        Ok(c)
    }

    /// `N_QA = F + F² + … + F^l_max`.
    pub fn total_allocators(&self) -> usize {
        let mut total = 0;
        let mut pow = 1;
        for _ in 0..self.max_level {
            pow *= self.fanout;
            total += pow;
        }
        total
    }

    /// Ids covered by an allocator at `level`, itself included.
    pub fn subtree_size(&self, level: u32) -> usize {
        let depth = self.max_level.saturating_sub(level);
        let mut total = 1;
        let mut pow = 1;
        for _ in 0..depth {
            pow *= self.fanout;
            total += pow;
        }
        total
    }
}

/// A node of the invocation tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Node {
    Coordinator,
    Allocator(usize),
}

/// Children of `node` at `level` as `(id, level)` pairs.
pub fn plan_children(node: Node, level: u32, config: &InvocationConfig) -> Vec<(usize, u32)> {
    let n_qa = config.total_allocators();
    let f = config.fanout;
    // `id' = id + i·J_S + 1`, with the coordinator at id −1
    let (start, jump) = match node {
        Node::Coordinator => (0, n_qa.div_ceil(f)),
        Node::Allocator(id) => {
            if level >= config.max_level {
                return Vec::new();
            }
            let mut ps = n_qa.div_ceil(f);
            for _ in 0..level {
                ps = (ps - 1).div_ceil(f);
            }
            (id + 1, ps)
        }
    };
    (0..f)
        .map(|i| (start + i * jump, level + 1))
        .filter(|&(id, _)| id < n_qa)
        .collect()
}

/// Shape of the allocator layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Topology {
    /// One allocator handling the whole batch.
    Single,
    Tree(InvocationConfig),
}

impl Topology {
    pub fn n_qa(&self) -> usize {
        match self {
            Topology::Single => 1,
            Topology::Tree(c) => c.total_allocators(),
        }
    }

    pub fn children(&self, node: Node, level: u32) -> Vec<(usize, u32)> {
        match (self, node) {
            (Topology::Single, Node::Coordinator) => vec![(0, 1)],
            (Topology::Single, Node::Allocator(_)) => Vec::new(),
            (Topology::Tree(c), _) => plan_children(node, level, c),
        }
    }

    /// Allocator ids in the subtree rooted at allocator `id` on `level`.
    pub fn subtree(&self, id: usize, level: u32) -> Range<usize> {
        match self {
            Topology::Single => id..id + 1,
            Topology::Tree(c) => id..id + c.subtree_size(level),
        }
    }
}

/// Query indices owned by allocator `qa` when `nq` queries are split evenly
/// over `n_qa` allocators.
pub fn owned_queries(qa: usize, n_qa: usize, nq: usize) -> Range<usize> {
    (qa * nq / n_qa)..((qa + 1) * nq / n_qa)
}
