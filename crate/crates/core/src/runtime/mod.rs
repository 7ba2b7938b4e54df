//! Local simulation of the serverless query path.
//!
//! A coordinator fans a query batch out over a tree of allocators. Each
//! allocator filters and plans its own share, invokes one processor per
//! visited partition, merges, and returns its share plus its subtree's
//! results to the parent. Instances exchange only serialized payloads and
//! keep loaded index data in their container between invocations.
//!
//! Containers are routed deterministically: allocator `i` always lands on
//! slot `i`, and the processor for partition `p` called by allocator `i`
//! lands on slot `i` of function `p`. Back-to-back identical runs therefore
//! hit the same warm containers.

mod cache;
mod container;
mod messages;
mod report;
mod schedule;
mod storage;
mod tree;

pub use cache::{fingerprint, ResultCache};
pub use container::{
    dre_fetch, AllocatorData, ContainerPool, DataKey, Fetch, FunctionId, Retained, RuntimeContainer,
};
pub use messages::{
    decode, encode, AllocatorRequest, AllocatorResponse, ProcessorItem, ProcessorRequest, ProcessorResponse,
    QueryResult, WireQuery,
};
pub use report::{InstanceRecord, MemoryConfig, Role, RoleCounts, RunReport};
pub use schedule::{interleave_schedule, run_schedule, sequential_schedule, Phase, Step};
pub use storage::{DirObjectStore, MemObjectStore, ObjectStore};
pub use tree::{owned_queries, plan_children, InvocationConfig, Node, Topology};

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{HybridQuery, ResultSet};
use crate::error::{Error, Result};
use crate::index::{coarse_from_parts, decode_residency, format, partition_file_name, Manifest, MANIFEST_FILE};
use crate::par::{self, Exec};
use crate::search::{merge_results, plan_queries, search_partition, PartitionPlan, QueryOptions, SearchParams, VectorStore};

/// Simulation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeConfig {
    pub topology: Topology,
    pub exec: Exec,
    /// Queries per allocator sub-batch; 0 keeps an allocator's share whole.
    pub qa_batch_size: usize,
    pub interleave: bool,
    /// Latency charged to an invocation that lands on a fresh container.
    pub cold_start_seconds: f64,
    pub memory: MemoryConfig,
    pub result_cache: bool,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            topology: Topology::Tree(InvocationConfig {
                fanout: 10,
                max_level: 1,
            }),
            exec: Exec::default(),
            qa_batch_size: 4,
            interleave: true,
            cold_start_seconds: 0.25,
            memory: MemoryConfig::default(),
            result_cache: false,
        }
    }
}

impl RuntimeConfig {
    pub fn validate(&self) -> Result<()> {
        if let Topology::Tree(c) = self.topology {
            InvocationConfig::new(c.fanout, c.max_level)?;
        }
        if !(self.cold_start_seconds >= 0.0 && self.cold_start_seconds.is_finite()) {
            return Err(Error::Config("cold-start latency must be a non-negative number".into()));
        }
        let m = self.memory;
        if [m.coordinator_mb, m.allocator_mb, m.processor_mb]
            .iter()
            .any(|x| !(*x > 0.0 && x.is_finite()))
        {
            return Err(Error::Config("memory sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Invocation that fails on purpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultTarget {
    Allocator(usize),
    Processor { allocator: usize, partition: usize },
}

/// Number of consecutive failing attempts per target.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub faults: Vec<(FaultTarget, u32)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchOutput {
    pub results: Vec<ResultSet>,
    pub report: RunReport,
}

/// Full-precision reads through a store, counted.
struct CountingStore<'a> {
    inner: &'a dyn VectorStore,
    reads: AtomicU64,
}

impl VectorStore for CountingStore<'_> {
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn read(&self, id: u32, out: &mut [f32]) -> Result<()> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.inner.read(id, out)
    }

    fn record_bytes(&self) -> usize {
        self.inner.record_bytes()
    }
}

/// A deployed index plus the container pool serving it.
pub struct Runtime {
    objects: Arc<dyn ObjectStore>,
    vectors: Arc<dyn VectorStore>,
    pool: Arc<ContainerPool>,
    config: RuntimeConfig,
    version: String,
    d: usize,
    cache: Mutex<ResultCache>,
    faults: Mutex<HashMap<FaultTarget, u32>>,
}

impl Runtime {
    /// Reads the manifest once to learn the deployed index version.
    pub fn new(
        objects: Arc<dyn ObjectStore>,
        vectors: Arc<dyn VectorStore>,
        pool: Arc<ContainerPool>,
        config: RuntimeConfig,
    ) -> Result<Self> {
        config.validate()?;
        let manifest = Manifest::from_bytes(&objects.get(MANIFEST_FILE)?)?;
        if vectors.d() != manifest.d {
            return Err(Error::DimensionMismatch {
                expected: manifest.d,
                actual: vectors.d(),
            });
        }
        Ok(Self {
            objects,
            vectors,
            pool,
            config,
            version: manifest.version,
            d: manifest.d,
            cache: Mutex::new(ResultCache::new()),
            faults: Mutex::new(HashMap::new()),
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.config
    }

    pub fn pool(&self) -> &Arc<ContainerPool> {
        &self.pool
    }

    pub fn inject_faults(&self, plan: &FaultPlan) {
        let mut f = self.faults.lock().expect("fault table");
        for &(t, n) in &plan.faults {
            *f.entry(t).or_insert(0) += n;
        }
    }

    fn take_fault(&self, target: FaultTarget) -> Result<()> {
        let mut f = self.faults.lock().expect("fault table");
        match f.get_mut(&target) {
            Some(n) if *n > 0 => {
                *n -= 1;
                Err(Error::Invocation(format!("injected failure at {target:?}")))
            }
            _ => Ok(()),
        }
    }

    /// Answers `queries` through the simulated topology.
    pub fn run_batch(&self, queries: &[HybridQuery], opts: &QueryOptions) -> Result<BatchOutput> {
        let start = Instant::now();
        for q in queries {
            if q.vector.len() != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    actual: q.vector.len(),
                });
            }
            opts.params(q.k).validate()?;
        }
        let co_cell = self.pool.container(FunctionId::Coordinator, 0);
        let mut co = co_cell.lock().expect("coordinator container");
        let mut co_rec = InstanceRecord::new(Role::Coordinator, 0, None, 1);
        if !co.is_warm() {
            co_rec.cold_start = true;
            co_rec.penalty_seconds = self.config.cold_start_seconds;
        }
        co.invocations += 1;

        enum Source {
            Dispatched(usize),
            Cached(ResultSet),
        }
        let mut sources = Vec::with_capacity(queries.len());
        let mut dispatched: Vec<usize> = Vec::new();
        let mut keys: Vec<Option<Vec<u8>>> = Vec::new();
        let (mut hits, mut misses) = (0u64, 0u64);
        if self.config.result_cache {
            let mut cache = self.cache.lock().expect("result cache");
            let mut first: HashMap<Vec<u8>, usize> = HashMap::new();
            for q in queries {
                let key = fingerprint(q)?;
                if let Some(&di) = first.get(&key) {
                    hits += 1;
                    sources.push(Source::Dispatched(di));
                } else if let Some(r) = cache.lookup(&key) {
                    hits += 1;
                    sources.push(Source::Cached(r));
                } else {
                    misses += 1;
                    let di = dispatched.len();
                    dispatched.push(sources.len());
                    first.insert(key.clone(), di);
                    keys.push(Some(key));
                    sources.push(Source::Dispatched(di));
                }
            }
        } else {
            for qi in 0..queries.len() {
                sources.push(Source::Dispatched(qi));
                dispatched.push(qi);
                keys.push(None);
            }
        }

        let ctx = RunCtx {
            rt: self,
            opts: *opts,
            n_dispatched: dispatched.len(),
            payload: AtomicU64::new(0),
        };
        let wire: Vec<WireQuery> = dispatched
            .iter()
            .enumerate()
            .map(|(di, &qi)| WireQuery::new(di, &queries[qi]))
            .collect();
        let children = if wire.is_empty() {
            Vec::new()
        } else {
            self.config.topology.children(Node::Coordinator, 0)
        };
        let outcomes = par::map_slice(self.config.exec, &children, |&(id, level)| {
            ctx.call_allocator(id, level, &wire)
        });

        let mut answers: Vec<Option<QueryResult>> = vec![None; dispatched.len()];
        let mut records = Vec::new();
        let mut failures = Vec::new();
        let mut retries = 0;
        for o in outcomes {
            let o = o?;
            for r in o.results {
                let i = r.index;
                answers[i] = Some(r);
            }
            records.extend(o.records);
            failures.extend(o.failures);
            retries += o.retries;
        }
        let answers: Vec<QueryResult> = answers
            .into_iter()
            .enumerate()
            .map(|(di, a)| {
                a.ok_or_else(|| Error::Contract(format!("no allocator answered dispatched query {di}")))
            })
            .collect::<Result<_>>()?;
        if self.config.result_cache {
            let mut cache = self.cache.lock().expect("result cache");
            for (a, key) in answers.iter().zip(keys) {
                if let (false, Some(key)) = (a.partial, key) {
                    cache.insert(key, ResultSet { entries: a.entries.clone() });
                }
            }
        }

        let mut results = Vec::with_capacity(queries.len());
        let mut partial_queries = Vec::new();
        let mut underfull_queries = Vec::new();
        for (qi, (src, q)) in sources.into_iter().zip(queries).enumerate() {
            let rs = match src {
                Source::Cached(r) => r,
                Source::Dispatched(di) => {
                    if answers[di].partial {
                        partial_queries.push(qi);
                    }
                    ResultSet {
                        entries: answers[di].entries.clone(),
                    }
                }
            };
            if rs.len() < q.k {
                underfull_queries.push(qi);
            }
            results.push(rs);
        }

        co_rec.seconds = start.elapsed().as_secs_f64();
        let mut report = RunReport {
            n_queries: queries.len(),
            topology: self.config.topology,
            n_qa: 0,
            n_qp: 0,
            memory: self.config.memory,
            coordinator: co_rec.clone(),
            allocators: Vec::new(),
            processors: Vec::new(),
            index_gets: RoleCounts::default(),
            warm_hits: RoleCounts::default(),
            cold_starts: RoleCounts::default(),
            full_precision_reads: 0,
            full_precision_bytes: 0,
            read_size_bytes: self.vectors.record_bytes() as u64,
            payload_bytes: ctx.payload.load(Ordering::Relaxed),
            cache_hits: hits,
            cache_misses: misses,
            retries,
            failures,
            partial_queries,
            underfull_queries,
            latency_seconds: co_rec.seconds,
            recall: None,
        };
        records.push(co_rec);
        for r in records {
            report.index_gets.add(r.role, r.index_gets);
            report.warm_hits.add(r.role, u64::from(r.fetch == Some(Fetch::Warm)));
            report.cold_starts.add(r.role, u64::from(r.cold_start));
            report.full_precision_reads += r.full_precision_reads;
            report.full_precision_bytes += r.full_precision_bytes;
            match r.role {
                Role::Allocator => report.allocators.push(r),
                Role::Processor => report.processors.push(r),
                Role::Coordinator => {}
            }
        }
        report.n_qa = report.allocators.len();
        report.n_qp = report.processors.len();
        Ok(BatchOutput { results, report })
    }
}

/// What a parent learns from one child call, after retries.
struct Outcome {
    results: Vec<QueryResult>,
    records: Vec<InstanceRecord>,
    failures: Vec<String>,
    retries: u64,
}

struct Prepared {
    indices: Vec<usize>,
    queries: Vec<HybridQuery>,
    plan: PartitionPlan,
}

struct RunCtx<'a> {
    rt: &'a Runtime,
    opts: QueryOptions,
    n_dispatched: usize,
    payload: AtomicU64,
}

impl RunCtx<'_> {
    fn count(&self, bytes: &[u8]) {
        self.payload.fetch_add(bytes.len() as u64, Ordering::Relaxed);
    }

    /// Calls `invoke` at most twice; a second injected failure gives up and
    /// flags `indices` as partial.
    #[allow(clippy::too_many_arguments)]
    fn with_retry(
        &self,
        request: &[u8],
        role: Role,
        node: usize,
        partition: Option<usize>,
        indices: impl Fn() -> Vec<usize>,
        invoke: impl Fn(&[u8], u32) -> Result<Vec<u8>>,
        parse: impl Fn(&[u8]) -> Result<Outcome>,
    ) -> Result<Outcome> {
        let mut failed = Vec::new();
        for attempt in 1..=2u32 {
            self.count(request);
            match invoke(request, attempt) {
                Ok(bytes) => {
                    self.count(&bytes);
                    let mut o = parse(&bytes)?;
                    o.retries += u64::from(attempt - 1);
                    o.records.extend(failed);
                    return Ok(o);
                }
                Err(Error::Invocation(msg)) => {
                    let mut rec = InstanceRecord::new(role, node, partition, attempt);
                    rec.failed = true;
                    failed.push(rec);
                    if attempt == 2 {
                        return Ok(Outcome {
                            results: indices()
                                .into_iter()
                                .map(|index| QueryResult {
                                    index,
                                    entries: Vec::new(),
                                    partial: true,
                                })
                                .collect(),
                            records: failed,
                            failures: vec![msg],
                            retries: 1,
                        });
                    }
                }
                Err(e) => return Err(e),
            }
        }
        unreachable!("two attempts")
    }

    fn call_allocator(&self, id: usize, level: u32, parent_queries: &[WireQuery]) -> Result<Outcome> {
        let topo = self.rt.config.topology;
        let n_qa = topo.n_qa();
        let sub = topo.subtree(id, level);
        let range = (sub.start * self.n_dispatched / n_qa)..(sub.end * self.n_dispatched / n_qa);
        let queries: Vec<WireQuery> = parent_queries
            .iter()
            .filter(|w| range.contains(&w.index))
            .cloned()
            .collect();
        let req = AllocatorRequest {
            version: self.rt.version.clone(),
            id,
            level,
            n_dispatched: self.n_dispatched,
            options: self.opts,
            queries,
        };
        let bytes = encode(&req)?;
        self.with_retry(
            &bytes,
            Role::Allocator,
            id,
            None,
            || range.clone().collect(),
            |b, attempt| self.invoke_allocator(b, attempt),
            |b| {
                let r: AllocatorResponse = decode(b)?;
                Ok(Outcome {
                    results: r.results,
                    records: r.records,
                    failures: r.failures,
                    retries: r.retries,
                })
            },
        )
    }

    fn load_allocator_data(&self, key: &DataKey, gets: &mut u64) -> Result<Retained> {
        let objects = &self.rt.objects;
        let manifest = Manifest::from_bytes(&objects.get(MANIFEST_FILE)?)?;
        *gets += 1;
        if manifest.version != key.version {
            return Err(Error::Contract(format!(
                "stored index version {} differs from deployed {}",
                manifest.version, key.version
            )));
        }
        let residency = decode_residency(&objects.get(&manifest.residency_file)?)?;
        *gets += 1;
        let attributes = format::decode_attributes(&objects.get(&manifest.attributes_file)?)?;
        *gets += 1;
        let coarse = coarse_from_parts(&manifest, residency)?;
        Ok(Retained::Allocator(Arc::new(AllocatorData {
            manifest,
            coarse,
            attributes,
        })))
    }

    fn invoke_allocator(&self, bytes: &[u8], attempt: u32) -> Result<Vec<u8>> {
        let t0 = Instant::now();
        let cfg = &self.rt.config;
        let req: AllocatorRequest = decode(bytes)?;
        self.rt.take_fault(FaultTarget::Allocator(req.id))?;
        let cell = self.rt.pool.container(FunctionId::Allocator, req.id);
        let mut c = cell.lock().expect("allocator container");
        let mut rec = InstanceRecord::new(Role::Allocator, req.id, None, attempt);
        if !c.is_warm() {
            rec.cold_start = true;
            rec.penalty_seconds = cfg.cold_start_seconds;
        }
        c.invocations += 1;
        let key = DataKey {
            version: req.version.clone(),
            partition: None,
        };
        let mut gets = 0;
        let (data, fetch) = dre_fetch(&mut c, &key, || self.load_allocator_data(&key, &mut gets))?;
        rec.fetch = Some(fetch);
        rec.index_gets = gets;
        let Retained::Allocator(data) = data else {
            return Err(Error::Contract("allocator received processor data".into()));
        };

        let children = cfg.topology.children(Node::Allocator(req.id), req.level);
        let (child_outcomes, own) = par::join(
            cfg.exec,
            || {
                par::map_slice(cfg.exec, &children, |&(cid, clevel)| {
                    self.call_allocator(cid, clevel, &req.queries)
                })
            },
            || self.allocator_work(&req, &data),
        );
        let mut own = own?;
        for o in child_outcomes {
            let o = o?;
            own.results.extend(o.results);
            own.records.extend(o.records);
            own.failures.extend(o.failures);
            own.retries += o.retries;
        }
        rec.seconds = t0.elapsed().as_secs_f64();
        let mut records = Vec::with_capacity(own.records.len() + 1);
        records.push(rec);
        records.extend(own.records);
        encode(&AllocatorResponse {
            id: req.id,
            results: own.results,
            records,
            failures: own.failures,
            retries: own.retries,
        })
    }

    /// Filters, plans and processes the allocator's own queries.
    fn allocator_work(&self, req: &AllocatorRequest, data: &AllocatorData) -> Result<Outcome> {
        let cfg = &self.rt.config;
        let own_range = owned_queries(req.id, cfg.topology.n_qa(), req.n_dispatched);
        let own: Vec<&WireQuery> = req.queries.iter().filter(|w| own_range.contains(&w.index)).collect();
        let bs = if cfg.qa_batch_size == 0 {
            own.len().max(1)
        } else {
            cfg.qa_batch_size
        };
        let batches: Vec<&[&WireQuery]> = own.chunks(bs).collect();
        let mut out = Outcome {
            results: Vec::with_capacity(own.len()),
            records: Vec::new(),
            failures: Vec::new(),
            retries: 0,
        };
        run_schedule(
            cfg.exec,
            batches.len(),
            cfg.interleave,
            |i| {
                let queries: Vec<HybridQuery> = batches[i].iter().map(|w| w.to_query()).collect();
                let (_, plan) = plan_queries(
                    cfg.exec,
                    &data.coarse,
                    &data.attributes,
                    data.manifest.t(),
                    data.manifest.d,
                    &queries,
                    &req.options,
                )?;
                Ok(Prepared {
                    indices: batches[i].iter().map(|w| w.index).collect(),
                    queries,
                    plan,
                })
            },
            |_, prep| {
                let jobs: Vec<(usize, Vec<ProcessorItem>)> = prep
                    .plan
                    .visits
                    .iter()
                    .enumerate()
                    .filter(|(_, vs)| !vs.is_empty())
                    .map(|(p, vs)| {
                        let items = vs
                            .iter()
                            .map(|v| {
                                let q = &prep.queries[v.query];
                                ProcessorItem {
                                    index: prep.indices[v.query],
                                    vector_bits: q.vector.iter().map(|x| x.to_bits()).collect(),
                                    k: q.k,
                                    candidates: v.candidates.clone(),
                                }
                            })
                            .collect();
                        (p, items)
                    })
                    .collect();
                par::map_slice(cfg.exec, &jobs, |(p, items)| self.call_processor(req, *p, items))
                    .into_iter()
                    .collect::<Result<Vec<Outcome>>>()
            },
            |_, prep, outcomes| {
                let slot: HashMap<usize, usize> = prep.indices.iter().enumerate().map(|(j, &i)| (i, j)).collect();
                let mut partials: Vec<Vec<ResultSet>> = vec![Vec::new(); prep.indices.len()];
                let mut partial = vec![false; prep.indices.len()];
                for o in outcomes {
                    for r in o.results {
                        let j = slot[&r.index];
                        partial[j] |= r.partial;
                        partials[j].push(ResultSet { entries: r.entries });
                    }
                    out.records.extend(o.records);
                    out.failures.extend(o.failures);
                    out.retries += o.retries;
                }
                for (j, &index) in prep.indices.iter().enumerate() {
                    out.results.push(QueryResult {
                        index,
                        entries: merge_results(&partials[j], prep.queries[j].k).entries,
                        partial: partial[j],
                    });
                }
                Ok(())
            },
        )?;
        Ok(out)
    }

    fn call_processor(&self, req: &AllocatorRequest, partition: usize, items: &[ProcessorItem]) -> Result<Outcome> {
        let preq = ProcessorRequest {
            version: req.version.clone(),
            allocator: req.id,
            partition,
            h_perc: req.options.h_perc,
            refine_factor: req.options.refine_factor,
            items: items.to_vec(),
        };
        let bytes = encode(&preq)?;
        self.with_retry(
            &bytes,
            Role::Processor,
            req.id,
            Some(partition),
            || items.iter().map(|i| i.index).collect(),
            |b, attempt| self.invoke_processor(b, attempt),
            |b| {
                let r: ProcessorResponse = decode(b)?;
                Ok(Outcome {
                    results: r.results,
                    records: vec![r.record],
                    failures: Vec::new(),
                    retries: 0,
                })
            },
        )
    }

    fn invoke_processor(&self, bytes: &[u8], attempt: u32) -> Result<Vec<u8>> {
        let t0 = Instant::now();
        let cfg = &self.rt.config;
        let req: ProcessorRequest = decode(bytes)?;
        let p = req.partition;
        self.rt.take_fault(FaultTarget::Processor {
            allocator: req.allocator,
            partition: p,
        })?;
        let cell = self.rt.pool.container(FunctionId::Processor(p), req.allocator);
        let mut c = cell.lock().expect("processor container");
        let mut rec = InstanceRecord::new(Role::Processor, req.allocator, Some(p), attempt);
        if !c.is_warm() {
            rec.cold_start = true;
            rec.penalty_seconds = cfg.cold_start_seconds;
        }
        c.invocations += 1;
        let key = DataKey {
            version: req.version.clone(),
            partition: Some(p),
        };
        let mut gets = 0;
        let (data, fetch) = dre_fetch(&mut c, &key, || {
            let part = format::decode_partition(&self.rt.objects.get(&partition_file_name(p))?)?;
            gets += 1;
            if part.id != p {
                return Err(Error::Contract(format!("partition file {p} holds partition {}", part.id)));
            }
            Ok(Retained::Processor(Arc::new(part)))
        })?;
        rec.fetch = Some(fetch);
        rec.index_gets = gets;
        let Retained::Processor(part) = data else {
            return Err(Error::Contract("processor received allocator data".into()));
        };
        let store = CountingStore {
            inner: self.rt.vectors.as_ref(),
            reads: AtomicU64::new(0),
        };
        let results = par::map_slice(cfg.exec, &req.items, |item| {
            let params = SearchParams {
                k: item.k,
                h_perc: req.h_perc,
                refine_factor: req.refine_factor,
            };
            params.validate()?;
            let vector: Vec<f32> = item.vector_bits.iter().map(|&b| f32::from_bits(b)).collect();
            let (rs, _) = search_partition(&part, &vector, &item.candidates, &params, &store)?;
            Ok(QueryResult {
                index: item.index,
                entries: rs.entries,
                partial: false,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        rec.full_precision_reads = store.reads.load(Ordering::Relaxed);
        rec.full_precision_bytes = rec.full_precision_reads * store.record_bytes() as u64;
        rec.seconds = t0.elapsed().as_secs_f64();
        encode(&ProcessorResponse {
            partition: p,
            results,
            record: rec,
        })
    }
}
