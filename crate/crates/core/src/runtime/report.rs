//! Per-run accounting.

use serde::{Deserialize, Serialize};

use super::container::Fetch;
use super::tree::Topology;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Coordinator,
    Allocator,
    Processor,
}

/// One invocation attempt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub role: Role,
    /// Allocator id; for processors, the invoking allocator.
    pub node: usize,
    pub partition: Option<usize>,
    pub attempt: u32,
    /// Measured wall time.
    pub seconds: f64,
    /// Simulated cold-start latency added on a fresh container.
    pub penalty_seconds: f64,
    pub cold_start: bool,
    pub fetch: Option<Fetch>,
    pub index_gets: u64,
    pub full_precision_reads: u64,
    pub full_precision_bytes: u64,
    pub failed: bool,
}

impl InstanceRecord {
    pub fn new(role: Role, node: usize, partition: Option<usize>, attempt: u32) -> Self {
        Self {
            role,
            node,
            partition,
            attempt,
            seconds: 0.0,
            penalty_seconds: 0.0,
            cold_start: false,
            fetch: None,
            index_gets: 0,
            full_precision_reads: 0,
            full_precision_bytes: 0,
            failed: false,
        }
    }

    /// Seconds the instance is billed for.
    pub fn billed_seconds(&self) -> f64 {
        self.seconds + self.penalty_seconds
    }
}

/// Memory size per role in MB.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    pub coordinator_mb: f64,
    pub allocator_mb: f64,
    pub processor_mb: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            coordinator_mb: 512.0,
            allocator_mb: 1770.0,
            processor_mb: 1770.0,
        }
    }
}

/// A counter split by role.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCounts {
    pub coordinator: u64,
    pub allocator: u64,
    pub processor: u64,
}

impl RoleCounts {
    pub fn add(&mut self, role: Role, n: u64) {
        match role {
            Role::Coordinator => self.coordinator += n,
            Role::Allocator => self.allocator += n,
            Role::Processor => self.processor += n,
        }
    }

    pub fn total(&self) -> u64 {
        self.coordinator + self.allocator + self.processor
    }
}

/// Everything measured during one batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n_queries: usize,
    pub topology: Topology,
    /// Allocator invocation attempts.
    pub n_qa: usize,
    /// Processor invocation attempts.
    pub n_qp: usize,
    pub memory: MemoryConfig,
    pub coordinator: InstanceRecord,
    pub allocators: Vec<InstanceRecord>,
    pub processors: Vec<InstanceRecord>,
    /// Index object GETs on cold fetches.
    pub index_gets: RoleCounts,
    /// Retained-data hits.
    pub warm_hits: RoleCounts,
    pub cold_starts: RoleCounts,
    pub full_precision_reads: u64,
    pub full_precision_bytes: u64,
    /// Bytes per full-precision read, `d · 4`.
    pub read_size_bytes: u64,
    /// Serialized request and response bytes.
    pub payload_bytes: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub retries: u64,
    pub failures: Vec<String>,
    /// Queries whose results may be missing partitions.
    pub partial_queries: Vec<usize>,
    /// Queries returning fewer than `k` neighbors.
    pub underfull_queries: Vec<usize>,
    pub latency_seconds: f64,
    pub recall: Option<f64>,
}

impl RunReport {
    pub fn t_co(&self) -> f64 {
        self.coordinator.billed_seconds()
    }

    pub fn sum_t_qa(&self) -> f64 {
        self.allocators.iter().map(InstanceRecord::billed_seconds).sum()
    }

    pub fn sum_t_qp(&self) -> f64 {
        self.processors.iter().map(InstanceRecord::billed_seconds).sum()
    }

    /// `L`: index GETs over all roles.
    pub fn total_index_gets(&self) -> u64 {
        self.index_gets.total()
    }

    pub fn cache_hit_rate(&self) -> f64 {
        let total = self.cache_hits + self.cache_misses;
        if total == 0 {
            0.0
        } else {
            self.cache_hits as f64 / total as f64
        }
    }

    pub fn is_clean(&self) -> bool {
        self.failures.is_empty() && self.partial_queries.is_empty()
    }
}
