//! Parallel vs sequential execution of the data-parallel stages.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use osq_core::dataset::synth::{aligned_predicate, make_queries, ClusteredModel};
use osq_core::dataset::{brute_force_batch, generate_attributes, AttributeTable, HybridQuery, VectorDataset};
use osq_core::index::{build, BuildParams, HybridIndex};
use osq_core::search::{search_batch, MemVectorStore, QueryOptions};
use osq_core::Exec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [Exec; 2] = [Exec::Sequential, Exec::Parallel];

struct Workload {
    ds: VectorDataset,
    attrs: AttributeTable,
    index: HybridIndex,
    queries: Vec<HybridQuery>,
}

fn workload(n: usize, d: usize, nq: usize) -> Workload {
    let model = ClusteredModel::new(d, d, 64, 1).unwrap();
    let ds = model.sample(n, 2).unwrap();
    let attrs = generate_attributes(n, 3, 3).unwrap();
    let index = build(Exec::default(), &ds, &attrs, &BuildParams::default()).unwrap();
    let bounds: Vec<Vec<f64>> = (0..3).map(|a| index.attributes.bounds(a)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let qv = model.sample(nq, 5).unwrap();
    let queries = make_queries(&qv, 10, |_| {
        let b: Vec<Option<&[f64]>> = bounds.iter().map(|b| Some(b.as_slice())).collect();
        aligned_predicate(&mut rng, &b, (6, 10))
    });
    Workload {
        ds,
        attrs,
        index,
        queries,
    }
}

fn bench_build(c: &mut Criterion) {
    let w = workload(20_000, 32, 1);
    let mut g = c.benchmark_group("build");
    g.sample_size(10);
    for exec in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| build(exec, black_box(&w.ds), &w.attrs, &BuildParams::default()).unwrap())
        });
    }
    g.finish();
}

fn bench_query(c: &mut Criterion) {
    let w = workload(50_000, 32, 200);
    let store = MemVectorStore::new(std::sync::Arc::new(w.ds.clone())).unwrap();
    let opts = QueryOptions::default();
    let mut g = c.benchmark_group("query");
    g.sample_size(10);
    for exec in MODES {
        let name = format!("{exec:?}");
        g.bench_with_input(BenchmarkId::new("search_batch", &name), &exec, |b, &exec| {
            b.iter(|| search_batch(exec, &w.index, &store, black_box(&w.queries), &opts).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("brute_force", &name), &exec, |b, &exec| {
            b.iter(|| brute_force_batch(exec, &w.ds, &w.attrs, black_box(&w.queries)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_build, bench_query);
criterion_main!(benches);
