//! `osq`: generate workloads, build indexes, compute ground truth and run
//! query batches on the simulated serverless runtime.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use config::{Overrides, RunConfig};
use osq_core::costmodel::{price_run, CostReport, PriceSheet};
use osq_core::dataset::synth::{aligned_predicate, make_queries, ClusteredModel};
use osq_core::dataset::{
    brute_force_batch, generate_attributes, load_vectors, recall_at_k, write_fvecs, write_ivecs, AttributeTable,
    HybridQuery, ResultSet, VecFormat, VectorDataset,
};
use osq_core::index::{build, HybridIndex, Manifest};
use osq_core::quantizer::quantize_attributes;
use osq_core::runtime::{
    ContainerPool, DirObjectStore, InvocationConfig, ObjectStore, RunReport, Runtime, RuntimeConfig, Topology,
};
use osq_core::search::{FileVectorStore, VectorStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const SAMPLE_PRICES: &str = include_str!("../prices.sample.toml");

#[derive(Parser)]
#[command(name = "osq", version, about = "Hybrid vector search with OSQ indexes on a simulated serverless runtime")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset, attributes, queries and a run config.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        num_attributes: Option<usize>,
        #[arg(long)]
        num_queries: Option<usize>,
    },
    /// Build index artifacts into the index directory.
    Build,
    /// Exact filtered top-k for every query, as ivecs padded with -1.
    Groundtruth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the query file through the simulated runtime.
    Query {
        /// Per-query results as JSON lines.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Cold and warm batches across several topologies.
    Bench {
        /// Comma-separated, e.g. `single,10x1,4x3`.
        #[arg(long, default_value = "single,10x1,4x3")]
        topologies: String,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => {}
        Ok(false) => std::process::exit(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

/// Returns whether the run was clean.
fn run(cli: &Cli) -> Result<bool> {
    let cfg = RunConfig::load(&cli.overrides)?;
    let (report, clean) = match &cli.command {
        Command::Generate {
            out,
            n,
            d,
            clusters,
            num_attributes,
            num_queries,
        } => {
            let mut g = cfg.generate.clone();
            g.n = n.unwrap_or(g.n);
            g.d = d.unwrap_or(g.d);
            g.clusters = clusters.unwrap_or(g.clusters);
            g.attributes = num_attributes.unwrap_or(g.attributes);
            g.queries = num_queries.unwrap_or(g.queries);
            let mut cfg = cfg.clone();
            cfg.generate = g;
            (cmd_generate(&cfg, out)?, true)
        }
        Command::Build => (cmd_build(&cfg)?, true),
        Command::Groundtruth { out } => (cmd_groundtruth(&cfg, out)?, true),
        Command::Query { results } => cmd_query(&cfg, results.as_deref())?,
        Command::Bench { topologies } => cmd_bench(&cfg, topologies)?,
    };
    emit(&report, cli.report.as_deref())?;
    Ok(clean)
}

fn emit(report: &serde_json::Value, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => Ok(r?),
        },
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<(VectorDataset, AttributeTable)> {
    let vpath = RunConfig::require(&cfg.data.vectors, "vectors")?;
    let format = VecFormat::from_path(vpath)
        .with_context(|| format!("{}: expected a .fvecs or .bvecs file", vpath.display()))?;
    let ds = load_vectors(vpath, format).with_context(|| format!("loading {}", vpath.display()))?;
    let apath = RunConfig::require(&cfg.data.attributes, "attributes")?;
    let attrs = AttributeTable::load(apath).with_context(|| format!("loading {}", apath.display()))?;
    if attrs.n() != ds.n() {
        bail!("{} attribute rows for {} vectors", attrs.n(), ds.n());
    }
    Ok((ds, attrs))
}

fn load_queries(cfg: &RunConfig) -> Result<Vec<HybridQuery>> {
    let path = RunConfig::require(&cfg.data.queries, "queries")?;
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut q: HybridQuery =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: bad query", path.display(), i + 1))?;
        if let Some(k) = cfg.k {
            q.k = k;
        }
        out.push(q);
    }
    Ok(out)
}

fn load_groundtruth(path: &Path) -> Result<Vec<Vec<u32>>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = osq_core::dataset::read_ivecs(BufReader::new(f))?;
    Ok(rows
        .into_iter()
        .map(|r| r.into_iter().filter(|&x| x >= 0).map(|x| x as u32).collect())
        .collect())
}

fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<serde_json::Value> {
    let g = &cfg.generate;
    std::fs::create_dir_all(out)?;
    let latent = if g.latent == 0 { g.d } else { g.latent };
    let model = ClusteredModel::new(g.d, latent, g.clusters, g.seed)?;
    let ds = model.sample(g.n, g.seed.wrapping_add(1))?;
    let attrs = generate_attributes(g.n, g.attributes, g.seed.wrapping_add(2))?;
    let aq = quantize_attributes(cfg.exec, &attrs, cfg.build.attributes)?;
    let bounds: Vec<Vec<f64>> = (0..g.attributes).map(|a| aq.bounds(a)).collect();
    let qv = model.sample(g.queries, g.seed.wrapping_add(3))?;
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed.wrapping_add(4));
    let queries = make_queries(&qv, cfg.k.unwrap_or(10), |_| {
        let b: Vec<Option<&[f64]>> = bounds.iter().map(|b| Some(b.as_slice())).collect();
        aligned_predicate(&mut rng, &b, g.span_cells)
    });

    write_fvecs(BufWriter::new(File::create(out.join("base.fvecs"))?), &ds)?;
    attrs.save(out.join("attributes.bin"))?;
    let mut w = BufWriter::new(File::create(out.join("queries.jsonl"))?);
    for q in &queries {
        serde_json::to_writer(&mut w, q)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;

    let mut run = RunConfig {
        generate: g.clone(),
        ..RunConfig::default()
    };
    run.data.vectors = Some("base.fvecs".into());
    run.data.attributes = Some("attributes.bin".into());
    run.data.queries = Some("queries.jsonl".into());
    run.data.groundtruth = Some("groundtruth.ivecs".into());
    run.data.index_dir = Some("index".into());
    std::fs::write(out.join("run.toml"), toml::to_string_pretty(&run)?)?;

    Ok(serde_json::json!({
        "command": "generate",
        "out": out,
        "n": g.n,
        "d": g.d,
        "attributes": g.attributes,
        "queries": queries.len(),
        "files": ["base.fvecs", "attributes.bin", "queries.jsonl", "run.toml"],
    }))
}

fn cmd_build(cfg: &RunConfig) -> Result<serde_json::Value> {
    let (ds, attrs) = load_dataset(cfg)?;
    let dir = RunConfig::require(&cfg.data.index_dir, "index dir")?;
    let t0 = Instant::now();
    let index = build(cfg.exec, &ds, &attrs, &cfg.build)?;
    let build_seconds = t0.elapsed().as_secs_f64();
    let written = index.save(dir, &ds)?;
    let files = written
        .iter()
        .map(|p| {
            let bytes = std::fs::metadata(p).map(|m| m.len()).unwrap_or(0);
            serde_json::json!({ "file": p.file_name().map(|s| s.to_string_lossy()), "bytes": bytes })
        })
        .collect::<Vec<_>>();
    Ok(build_summary(&index, dir, build_seconds, files))
}

fn build_summary(index: &HybridIndex, dir: &Path, secs: f64, files: Vec<serde_json::Value>) -> serde_json::Value {
    let m = index.manifest();
    serde_json::json!({
        "command": "build",
        "index_dir": dir,
        "version": m.version,
        "n": m.n,
        "d": m.d,
        "partition_sizes": m.partition_sizes,
        "threshold": m.threshold,
        "params": m.params,
        "build_seconds": secs,
        "files": files,
    })
}

fn cmd_groundtruth(cfg: &RunConfig, out: &Path) -> Result<serde_json::Value> {
    let (ds, attrs) = load_dataset(cfg)?;
    let queries = load_queries(cfg)?;
    let truth = brute_force_batch(cfg.exec, &ds, &attrs, &queries)?;
    let rows: Vec<Vec<i32>> = truth
        .iter()
        .zip(&queries)
        .map(|(r, q)| {
            let mut row: Vec<i32> = r.entries.iter().map(|e| e.id as i32).collect();
            row.resize(q.k, -1);
            row
        })
        .collect();
    write_ivecs(BufWriter::new(File::create(out)?), &rows)?;
    let padded = truth.iter().zip(&queries).filter(|(r, q)| r.len() < q.k).count();
    Ok(serde_json::json!({
        "command": "groundtruth",
        "out": out,
        "queries": rows.len(),
        "padded_rows": padded,
    }))
}

fn price_sheet(cfg: &RunConfig) -> Result<PriceSheet> {
    match &cfg.prices {
        Some(p) => PriceSheet::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(PriceSheet::from_toml_str(SAMPLE_PRICES)?),
    }
}

struct Deployment {
    objects: Arc<dyn ObjectStore>,
    vectors: Arc<dyn VectorStore>,
    manifest: Manifest,
}

fn deploy(cfg: &RunConfig) -> Result<Deployment> {
    let dir = RunConfig::require(&cfg.data.index_dir, "index dir")?;
    let manifest = Manifest::load(dir).with_context(|| format!("no index manifest in {}", dir.display()))?;
    let vectors = FileVectorStore::open(dir.join(&manifest.vectors_file), manifest.d)?;
    Ok(Deployment {
        objects: Arc::new(DirObjectStore::new(dir)),
        vectors: Arc::new(vectors),
        manifest,
    })
}

fn mean_recall(truth: &[Vec<u32>], results: &[ResultSet], queries: &[HybridQuery]) -> Result<f64> {
    if truth.len() != results.len() {
        bail!("ground truth has {} rows for {} queries", truth.len(), results.len());
    }
    let sum: f64 = truth
        .iter()
        .zip(results)
        .zip(queries)
        .map(|((g, r), q)| recall_at_k(g, &r.ids(), q.k))
        .sum();
    Ok(sum / results.len().max(1) as f64)
}

#[derive(Serialize)]
struct RunEntry {
    run: usize,
    pool: &'static str,
    report: RunReport,
    cost: CostReport,
}

fn cmd_query(cfg: &RunConfig, results_path: Option<&Path>) -> Result<(serde_json::Value, bool)> {
    let dep = deploy(cfg)?;
    let queries = load_queries(cfg)?;
    let truth = cfg.data.groundtruth.as_deref().filter(|p| p.exists()).map(load_groundtruth).transpose()?;
    let prices = price_sheet(cfg)?;
    let mut pool = Arc::new(ContainerPool::new());
    let mut runs = Vec::new();
    let mut last = Vec::new();
    for run in 0..cfg.repeat {
        if run > 0 && !cfg.retain_pool {
            pool = Arc::new(ContainerPool::new());
        }
        let pool_state = if run > 0 && cfg.retain_pool { "retained" } else { "fresh" };
        let rt = Runtime::new(dep.objects.clone(), dep.vectors.clone(), pool.clone(), cfg.runtime.clone())?;
        let out = rt.run_batch(&queries, &cfg.query)?;
        let mut report = out.report;
        if let Some(t) = &truth {
            report.recall = Some(mean_recall(t, &out.results, &queries)?);
        }
        let cost = price_run(&report, &prices);
        runs.push(RunEntry {
            run,
            pool: pool_state,
            report,
            cost,
        });
        last = out.results;
    }
    if let Some(p) = results_path {
        let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
        for (i, (r, q)) in last.iter().zip(&queries).enumerate() {
            let line = serde_json::json!({
                "index": i,
                "ids": r.ids(),
                "distances": r.entries.iter().map(|e| e.distance).collect::<Vec<_>>(),
                "underfull": r.len() < q.k,
            });
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    let clean = runs.iter().all(|r| r.report.is_clean());
    let value = serde_json::json!({
        "command": "query",
        "clean": clean,
        "index_version": dep.manifest.version,
        "queries": queries.len(),
        "prices": prices,
        "config": cfg,
        "runs": runs,
    });
    Ok((value, clean))
}

fn parse_topology(s: &str) -> Result<Topology> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("single") {
        return Ok(Topology::Single);
    }
    let (f, l) = s
        .split_once('x')
        .with_context(|| format!("topology `{s}`: expected `single` or `<fanout>x<levels>`"))?;
    let c = InvocationConfig::new(f.parse()?, l.parse()?)?;
    Ok(Topology::Tree(c))
}

#[derive(Serialize)]
struct BenchEntry {
    topology: Topology,
    n_qa: usize,
    pool: &'static str,
    latency_seconds: f64,
    recall: Option<f64>,
    index_gets: u64,
    cold_starts: u64,
    total_cost: f64,
    clean: bool,
}

fn cmd_bench(cfg: &RunConfig, topologies: &str) -> Result<(serde_json::Value, bool)> {
    let dep = deploy(cfg)?;
    let queries = load_queries(cfg)?;
    let truth = cfg.data.groundtruth.as_deref().filter(|p| p.exists()).map(load_groundtruth).transpose()?;
    let prices = price_sheet(cfg)?;
    let mut entries = Vec::new();
    for t in topologies.split(',') {
        let topology = parse_topology(t)?;
        let rc = RuntimeConfig {
            topology,
            ..cfg.runtime.clone()
        };
        let rt = Runtime::new(dep.objects.clone(), dep.vectors.clone(), Arc::new(ContainerPool::new()), rc)?;
        for pool in ["cold", "warm"] {
            let out = rt.run_batch(&queries, &cfg.query)?;
            let r = &out.report;
            let recall = truth.as_ref().map(|t| mean_recall(t, &out.results, &queries)).transpose()?;
            entries.push(BenchEntry {
                topology,
                n_qa: r.n_qa,
                pool,
                latency_seconds: r.latency_seconds,
                recall,
                index_gets: r.total_index_gets(),
                cold_starts: r.cold_starts.total(),
                total_cost: price_run(r, &prices).total,
                clean: r.is_clean(),
            });
        }
    }
    let clean = entries.iter().all(|e| e.clean);
    let value = serde_json::json!({
        "command": "bench",
        "clean": clean,
        "index_version": dep.manifest.version,
        "queries": queries.len(),
        "entries": entries,
    });
    Ok((value, clean))
}
