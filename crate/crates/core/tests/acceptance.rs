//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use osq_core::costmodel::{price_run, PriceSheet};
use osq_core::dataset::synth::{aligned_predicate, make_queries, ClusteredModel};
use osq_core::dataset::{
    brute_force_batch, brute_force_masked, generate_attributes, generate_attributes_with_kinds, l2_squared,
    recall_at_k, selectivity, AttributeKind, HybridQuery, ResultSet,
};
use osq_core::hybrid_filter::{filter_masks, quantized_mask_naive};
use osq_core::index::format::{decode_partition, PartitionHeader};
use osq_core::index::{build, partition_file_name, BuildParams};
use osq_core::osq::{extract_dim, pack, sq_segments};
use osq_core::quantizer::{cell_of, quantize_attributes, AttrQuantConfig, BitAllocation, CodeMatrix};
use osq_core::runtime::{
    plan_children, ContainerPool, Fetch, InstanceRecord, InvocationConfig, MemObjectStore, MemoryConfig, Node,
    ObjectStore, Role, RoleCounts, RunReport, Runtime, RuntimeConfig, Topology,
};
use osq_core::search::{
    build_adc_table, lb_distances, plan_batch, search_batch, MemVectorStore, QueryOptions, VectorStore,
};
use osq_core::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bits(rs: &[ResultSet]) -> Vec<Vec<(u32, u64)>> {
    rs.iter()
        .map(|r| r.entries.iter().map(|e| (e.id, e.distance.to_bits())).collect())
        .collect()
}

fn recall_desk_scale() -> Check {
    let (n, d, nq, k) = (100_000, 64, 1000, 10);
    let model = ClusteredModel::new(d, d, 300, 1).map_err(|e| e.to_string())?;
    let ds = model.sample(n, 2).map_err(|e| e.to_string())?;
    let attrs = generate_attributes(n, 4, 3).map_err(|e| e.to_string())?;
    let params = BuildParams::default();
    let index = build(Exec::Parallel, &ds, &attrs, &params).map_err(|e| e.to_string())?;
    let bounds: Vec<Vec<f64>> = (0..4).map(|a| index.attributes.bounds(a)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let qv = model.sample(nq, 99).map_err(|e| e.to_string())?;
    let queries = make_queries(&qv, k, |_| {
        let b: Vec<Option<&[f64]>> = bounds.iter().map(|b| Some(b.as_slice())).collect();
        aligned_predicate(&mut rng, &b, (8, 9))
    });
    let sel = queries
        .iter()
        .map(|q| selectivity(&q.predicate, &attrs).unwrap())
        .sum::<f64>()
        / nq as f64;
    let truth = brute_force_batch(Exec::Parallel, &ds, &attrs, &queries).map_err(|e| e.to_string())?;
    let ds = Arc::new(ds);
    let objects: Arc<dyn ObjectStore> = Arc::new(MemObjectStore::from_index(&index).map_err(|e| e.to_string())?);
    let vectors: Arc<dyn VectorStore> = Arc::new(MemVectorStore::new(ds.clone()).map_err(|e| e.to_string())?);
    let rt = Runtime::new(objects, vectors, Arc::new(ContainerPool::new()), RuntimeConfig::default())
        .map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let out = rt.run_batch(&queries, &QueryOptions::default()).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let recall = truth
        .iter()
        .zip(&out.results)
        .map(|(g, r)| recall_at_k(&g.ids(), &r.ids(), k))
        .sum::<f64>()
        / nq as f64;
    let detail = format!(
        "recall@10 = {recall:.4} over {nq} queries, mean selectivity {:.2}%, b = {}, T = {:.4}, batch {secs:.2}s",
        100.0 * sel,
        params.budget_for(d),
        index.t()
    );
    ensure((0.06..=0.10).contains(&sel), || format!("selectivity off target: {detail}"))?;
    ensure(recall >= 0.95, || detail.clone())?;
    Ok(detail)
}

fn compression_exactness() -> Check {
    let uniform = BitAllocation::new(vec![4; 128], 8).map_err(|e| e.to_string())?;
    ensure(uniform.segments() == 64 && sq_segments(&uniform) == 128, || {
        format!("uniform 4-bit: {} packed vs {} SQ segments", uniform.segments(), sq_segments(&uniform))
    })?;
    let model = ClusteredModel::new(128, 128, 20, 7).map_err(|e| e.to_string())?;
    let n = 3000;
    let ds = model.sample(n, 8).map_err(|e| e.to_string())?;
    let attrs = generate_attributes(n, 2, 9).map_err(|e| e.to_string())?;
    let params = BuildParams {
        partitions: 2,
        ..Default::default()
    };
    let index = build(Exec::Parallel, &ds, &attrs, &params).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    index.save(dir.path(), &ds).map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    for p in 0..2 {
        let bytes = std::fs::read(dir.path().join(partition_file_name(p))).map_err(|e| e.to_string())?;
        let h = PartitionHeader::read(bytes.as_slice()).map_err(|e| e.to_string())?;
        let part = decode_partition(&bytes).map_err(|e| e.to_string())?;
        let seg_bytes = part.segments.as_bytes().len();
        ensure(
            h.budget == 512 && h.segments_per_row == 64 && h.segment_size == 8 && seg_bytes == h.n as usize * 64,
            || format!("partition {p}: header {h:?}, {seg_bytes} segment bytes"),
        )?;
        ensure(sq_segments(&part.alloc) >= 128, || format!("partition {p}: SQ below 128"))?;
        detail.push(format!(
            "p{p}: {} rows x 64 segments = {seg_bytes} bytes, SQ would need {}",
            h.n,
            sq_segments(&part.alloc)
        ));
    }
    Ok(format!("d=128 S=8 b=512 gives 64 segments per vector vs 128 for 4-bit SQ; {}", detail.join("; ")))
}

fn pack_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut over_s, mut zero, mut failures) = (0, 0, 0);
    for _ in 0..1000 {
        let s = 8 * rng.random_range(1..=8u32);
        let d = rng.random_range(1..=48);
        let bits: Vec<u32> = (0..d)
            .map(|_| match rng.random_range(0..6) {
                0 => 0,
                1 => rng.random_range(s.min(63) + 1..=64),
                _ => rng.random_range(1..=s),
            })
            .collect();
        over_s += usize::from(bits.iter().any(|&b| b > s));
        zero += usize::from(bits.contains(&0));
        let alloc = BitAllocation::new(bits.clone(), s).map_err(|e| e.to_string())?;
        let n = rng.random_range(1..=6);
        let codes: Vec<u64> = (0..n * d)
            .map(|i| {
                let b = bits[i % d];
                if b == 0 {
                    0
                } else {
                    rng.random::<u64>() >> (64 - b)
                }
            })
            .collect();
        let m = CodeMatrix::new(n, d, codes).map_err(|e| e.to_string())?;
        let seg = pack(&m, &alloc).map_err(|e| e.to_string())?;
        if (0..d).any(|j| extract_dim(&seg, &alloc, j, None) != m.column(j)) {
            failures += 1;
        }
    }
    ensure(failures == 0 && over_s > 0 && zero > 0, || format!("{failures} failures"))?;
    Ok(format!("1000 configurations ({over_s} with B > S, {zero} with B = 0), 0 failures"))
}

fn filter_oracle() -> Check {
    let kinds = [
        AttributeKind::Numeric,
        AttributeKind::Categorical,
        AttributeKind::Numeric,
        AttributeKind::Categorical,
    ];
    let raw = generate_attributes_with_kinds(5000, &kinds, 31).map_err(|e| e.to_string())?;
    let aq = quantize_attributes(Exec::Parallel, &raw, AttrQuantConfig::default()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let preds: Vec<_> = (0..500).map(|_| common::random_predicate(&mut rng, &aq, &raw)).collect();
    let masks = filter_masks(Exec::Parallel, &aq, &preds).map_err(|e| e.to_string())?;
    let mut mismatches = 0;
    for (p, m) in preds.iter().zip(&masks) {
        if *m != quantized_mask_naive(&aq, p).map_err(|e| e.to_string())? {
            mismatches += 1;
        }
    }
    let nonempty = masks.iter().filter(|m| m.any()).count();
    ensure(mismatches == 0, || format!("{mismatches} of 500 masks differ"))?;
    Ok(format!("500 predicates over 2 numeric + 2 categorical attributes, {nonempty} non-empty, all bit-identical"))
}

fn selection_guarantee() -> Check {
    let fx = common::fixture(10_000, 32, 1, 0, 41);
    let model = ClusteredModel::new(32, 32, 40, 41).map_err(|e| e.to_string())?;
    let qv = model.sample(2000, 42).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let k = 10;
    let mut queries = Vec::new();
    let mut masks = Vec::new();
    let mut i = 0;
    while queries.len() < 200 && i < qv.n() {
        let q = HybridQuery {
            vector: qv.row(i).to_vec(),
            predicate: common::random_predicate(&mut rng, &fx.index.attributes, &fx.attrs),
            k,
        };
        i += 1;
        let m = quantized_mask_naive(&fx.index.attributes, &q.predicate).map_err(|e| e.to_string())?;
        if m.count_ones() >= k {
            queries.push(q);
            masks.push(m);
        }
    }
    ensure(queries.len() == 200, || "could not draw 200 satisfiable queries".into())?;
    let (_, plan) = plan_batch(Exec::Parallel, &fx.index, &queries, &QueryOptions::default()).map_err(|e| e.to_string())?;
    let mut found = vec![0usize; queries.len()];
    for (p, visits) in plan.visits.iter().enumerate() {
        for v in visits {
            for r in v.candidates.iter_ones() {
                let g = fx.index.parts[p].global_ids[r] as usize;
                ensure(masks[v.query].get(g), || format!("query {} candidate {g} fails its predicate", v.query))?;
                found[v.query] += 1;
            }
        }
    }
    let min = *found.iter().min().unwrap();
    ensure(min >= k, || format!("a query planned only {min} candidates"))?;
    let sel: f64 = masks.iter().map(|m| m.count_ones() as f64 / 10_000.0).sum::<f64>() / 200.0;
    Ok(format!(
        "200 queries (mean selectivity {:.1}%), min candidates {min}, all candidates pass, {} partition visits",
        100.0 * sel,
        plan.total_visits()
    ))
}

fn lb_soundness() -> Check {
    let fx = common::fixture(10_000, 32, 1, 0, 51);
    let model = ClusteredModel::new(32, 32, 40, 51).map_err(|e| e.to_string())?;
    let qv = model.sample(100, 52).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let (mut violations, mut worst, mut max_table_err) = (0usize, 0.0f64, 0.0f64);
    for pair in 0..10_000 {
        let q = qv.row(pair % qv.n());
        let part = &fx.index.parts[rng.random_range(0..fx.index.parts.len())];
        let row = rng.random_range(0..part.n());
        let y = part.transform_query(q);
        let table = build_adc_table(&y, &part.quantizers);
        let lb = lb_distances(&table, &part.segments, &part.alloc, &[row])[0];
        let exact = l2_squared(q, fx.ds.row(part.global_ids[row] as usize));
        if exact > 0.0 {
            worst = worst.max(lb / exact);
        }
        if lb > exact * (1.0 + 1e-9) {
            violations += 1;
        }
        let codes = osq_core::osq::unpack(&part.segments.select_rows(&[row]), &part.alloc);
        let direct: f64 = (0..part.d())
            .map(|j| {
                let b = &part.quantizers.bounds[j];
                let cells = part.quantizers.cells(j);
                let c = codes.get(0, j) as usize;
                let lo = if c == 0 { f64::NEG_INFINITY } else { b[c] };
                let hi = if c + 1 == cells { f64::INFINITY } else { b[c + 1] };
                let own = cell_of(b, y[j]);
                let gap = if c == own {
                    0.0
                } else if y[j] < lo {
                    lo - y[j]
                } else if y[j] > hi {
                    y[j] - hi
                } else {
                    0.0
                };
                gap * gap
            })
            .sum();
        max_table_err = max_table_err.max((direct - lb).abs());
    }
    ensure(violations == 0 && max_table_err <= 1e-9, || {
        format!("{violations} violations, table vs direct max error {max_table_err:e}")
    })?;
    Ok(format!(
        "10000 pairs, 0 violations (largest LB/exact ratio {worst:.4}, 1e-9 rounding allowance), table vs direct max error {max_table_err:.1e}"
    ))
}

fn exactness_limit() -> Check {
    let fx = common::fixture(10_000, 24, 100, 2, 61);
    let opts = QueryOptions {
        h_perc: 100.0,
        refine_factor: 10_000.0,
        threshold_override: Some(f64::INFINITY),
        ..Default::default()
    };
    let store = MemVectorStore::new(fx.ds.clone()).map_err(|e| e.to_string())?;
    let got = search_batch(Exec::Parallel, &fx.index, &store, &fx.queries, &opts).map_err(|e| e.to_string())?;
    let mut equal = 0;
    for (q, r) in fx.queries.iter().zip(&got) {
        let mask = quantized_mask_naive(&fx.index.attributes, &q.predicate).map_err(|e| e.to_string())?;
        let want = brute_force_masked(&fx.ds, &mask, q).map_err(|e| e.to_string())?;
        if bits(std::slice::from_ref(&want)) == bits(std::slice::from_ref(r)) {
            equal += 1;
        }
    }
    ensure(equal == 100, || format!("{equal}/100 queries equal the oracle"))?;
    Ok("100/100 queries equal the quantized-semantics oracle (ids and distance bits)".into())
}

fn tree_coverage() -> Check {
    fn walk(c: &InvocationConfig, node: Node, level: u32, end: usize, seen: &mut Vec<usize>) -> std::result::Result<(), String> {
        let kids = plan_children(node, level, c);
        for (i, &(id, l)) in kids.iter().enumerate() {
            let next = kids.get(i + 1).map_or(end, |x| x.0);
            let before = seen.len();
            seen.push(id);
            walk(c, Node::Allocator(id), l, next, seen)?;
            let mut sub: Vec<usize> = seen[before..].to_vec();
            sub.sort_unstable();
            let want: Vec<usize> = (id..next).collect();
            ensure(sub == want, || format!("{c:?}: subtree of {id} is not {id}..{next}"))?;
            ensure(Topology::Tree(*c).subtree(id, l) == (id..next), || format!("{c:?}: range of {id}"))?;
        }
        Ok(())
    }
    let mut lines = Vec::new();
    for (f, l, n) in [(10, 1, 10), (4, 2, 20), (4, 3, 84), (5, 3, 155), (6, 3, 258), (4, 4, 340)] {
        let c = InvocationConfig::new(f, l).map_err(|e| e.to_string())?;
        ensure(c.total_allocators() == n, || format!("({f},{l}) gives {}", c.total_allocators()))?;
        let mut seen = Vec::new();
        walk(&c, Node::Coordinator, 0, n, &mut seen)?;
        let count = seen.len();
        seen.sort_unstable();
        seen.dedup();
        ensure(count == n && seen == (0..n).collect::<Vec<_>>(), || format!("({f},{l}) ids not exact"))?;
        lines.push(format!("({f},{l})->{n}"));
    }
    Ok(format!("{} each exact and contiguous", lines.join(" ")))
}

fn runtime_for(fx: &common::Fixture, topology: Topology, pool: Arc<ContainerPool>) -> std::result::Result<Runtime, String> {
    let objects: Arc<dyn ObjectStore> = Arc::new(MemObjectStore::from_index(&fx.index).map_err(|e| e.to_string())?);
    let vectors: Arc<dyn VectorStore> = Arc::new(MemVectorStore::new(fx.ds.clone()).map_err(|e| e.to_string())?);
    let config = RuntimeConfig {
        topology,
        ..Default::default()
    };
    Runtime::new(objects, vectors, pool, config).map_err(|e| e.to_string())
}

fn distributed_equivalence() -> Check {
    let fx = common::fixture(10_000, 32, 300, 3, 71);
    let opts = QueryOptions::default();
    let store = MemVectorStore::new(fx.ds.clone()).map_err(|e| e.to_string())?;
    let reference = bits(&search_batch(Exec::Sequential, &fx.index, &store, &fx.queries, &opts).map_err(|e| e.to_string())?);
    let mut runs = 0;
    for topo in [
        Topology::Single,
        Topology::Tree(InvocationConfig::new(10, 1).unwrap()),
        Topology::Tree(InvocationConfig::new(4, 3).unwrap()),
    ] {
        let pool = Arc::new(ContainerPool::new());
        let rt = runtime_for(&fx, topo, pool.clone())?;
        for state in ["cold", "warm"] {
            let out = rt.run_batch(&fx.queries, &opts).map_err(|e| e.to_string())?;
            ensure(bits(&out.results) == reference, || format!("N_QA={} {state} pool differs", topo.n_qa()))?;
            ensure(out.report.is_clean(), || "run reported failures".into())?;
            runs += 1;
        }
    }
    Ok(format!("{runs} runs over N_QA in {{1, 10, 84}} x cold/warm pools identical to the single-process reference (300 queries, n=10000)"))
}

fn dre_effect() -> Check {
    let fx = common::fixture(10_000, 32, 200, 3, 81);
    let opts = QueryOptions::default();
    let pool = Arc::new(ContainerPool::new());
    let rt = runtime_for(&fx, Topology::Tree(InvocationConfig::new(4, 3).unwrap()), pool)?;
    let first = rt.run_batch(&fx.queries, &opts).map_err(|e| e.to_string())?;
    let second = rt.run_batch(&fx.queries, &opts).map_err(|e| e.to_string())?;
    let (g1, g2) = (first.report.index_gets, second.report.index_gets);
    ensure(g2.allocator == 0 && g2.processor == 0, || format!("second run fetched {g2:?}"))?;
    ensure(bits(&first.results) == bits(&second.results), || "results changed".into())?;
    let warm = second.report.warm_hits;
    ensure(
        warm.allocator as usize == second.report.n_qa && warm.processor as usize == second.report.n_qp,
        || format!("warm hits {warm:?}"),
    )?;
    Ok(format!(
        "index GETs run 1: QA {} QP {}, run 2: QA 0 QP 0; {} QA and {} QP warm hits; results unchanged",
        g1.allocator, g1.processor, warm.allocator, warm.processor
    ))
}

fn random_record(rng: &mut ChaCha8Rng, role: Role, node: usize) -> InstanceRecord {
    let mut r = InstanceRecord::new(role, node, None, 1);
    r.seconds = rng.random_range(0.0..3.0);
    r.cold_start = rng.random_bool(0.3);
    r.penalty_seconds = if r.cold_start { rng.random_range(0.0..0.5) } else { 0.0 };
    r.fetch = Some(if r.cold_start { Fetch::Cold } else { Fetch::Warm });
    r.index_gets = rng.random_range(0..4);
    r.full_precision_reads = if role == Role::Processor { rng.random_range(0..500) } else { 0 };
    r
}

fn random_report(rng: &mut ChaCha8Rng) -> RunReport {
    let coordinator = random_record(rng, Role::Coordinator, 0);
    let n_qa = rng.random_range(1..100);
    let n_qp = rng.random_range(0..400);
    let allocators: Vec<_> = (0..n_qa).map(|i| random_record(rng, Role::Allocator, i)).collect();
    let processors: Vec<_> = (0..n_qp).map(|i| random_record(rng, Role::Processor, i % n_qa)).collect();
    let mut gets = RoleCounts::default();
    for r in allocators.iter().chain(&processors) {
        gets.add(r.role, r.index_gets);
    }
    let reads: u64 = processors.iter().map(|r| r.full_precision_reads).sum();
    let d = rng.random_range(1..1000u64);
    RunReport {
        n_queries: 1000,
        topology: Topology::Single,
        n_qa,
        n_qp,
        memory: MemoryConfig {
            coordinator_mb: rng.random_range(128.0..4096.0),
            allocator_mb: rng.random_range(128.0..10240.0),
            processor_mb: rng.random_range(128.0..10240.0),
        },
        coordinator,
        allocators,
        processors,
        index_gets: gets,
        warm_hits: RoleCounts::default(),
        cold_starts: RoleCounts::default(),
        full_precision_reads: reads,
        full_precision_bytes: reads * d * 4,
        read_size_bytes: d * 4,
        payload_bytes: 0,
        cache_hits: 0,
        cache_misses: 0,
        retries: 0,
        failures: Vec::new(),
        partial_queries: Vec::new(),
        underfull_queries: Vec::new(),
        latency_seconds: 0.0,
        recall: None,
    }
}

fn cost_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let report = random_report(&mut rng);
        let prices = PriceSheet {
            per_invocation: rng.random_range(0.0..1e-6),
            per_mb_second: rng.random_range(0.0..1e-7),
            per_get: rng.random_range(0.0..1e-6),
            per_byte_read: rng.random_range(0.0..1e-10),
            note: None,
        };
        let c = price_run(&report, &prices);
        // straight-line recomputation from the raw records
        let mut t_qa = 0.0;
        for r in &report.allocators {
            t_qa += r.seconds + r.penalty_seconds;
        }
        let mut t_qp = 0.0;
        for r in &report.processors {
            t_qp += r.seconds + r.penalty_seconds;
        }
        let t_co = report.coordinator.seconds + report.coordinator.penalty_seconds;
        let mut l = 0u64;
        let mut s = 0u64;
        for r in report.allocators.iter().chain(&report.processors) {
            l += r.index_gets;
            s += r.full_precision_reads;
        }
        let invoc = (report.allocators.len() + report.processors.len() + 1) as f64 * prices.per_invocation;
        let run = (report.memory.allocator_mb * t_qa + report.memory.processor_mb * t_qp + report.memory.coordinator_mb * t_co)
            * prices.per_mb_second;
        let s3 = l as f64 * prices.per_get;
        let efs = s as f64 * report.read_size_bytes as f64 * prices.per_byte_read;
        let total = invoc + run + s3 + efs;
        for (got, want) in [(c.invocation, invoc), (c.runtime, run), (c.object_gets, s3), (c.byte_reads, efs), (c.total, total)] {
            let rel = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(if want == 0.0 { got.abs() } else { rel });
        }
        ensure(c.total == c.lambda + c.object_gets + c.byte_reads && c.lambda == c.invocation + c.runtime, || {
            "decomposition identity broken".into()
        })?;
    }
    ensure(worst <= 1e-12, || format!("worst relative error {worst:e}"))?;
    Ok(format!("50 random reports, worst relative error {worst:.1e}, identities exact"))
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 11] = [
        ("recall at desk scale", recall_desk_scale),
        ("compression exactness", compression_exactness),
        ("pack/extract round trip", pack_round_trip),
        ("filter-mask oracle equivalence", filter_oracle),
        ("partition-selection guarantee", selection_guarantee),
        ("lower-bound soundness", lb_soundness),
        ("exactness limit", exactness_limit),
        ("invocation-tree coverage", tree_coverage),
        ("distributed equivalence", distributed_equivalence),
        ("retained-data effect", dre_effect),
        ("cost-model identities", cost_identities),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
