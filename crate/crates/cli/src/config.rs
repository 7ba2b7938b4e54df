//! Run configuration: a TOML file with command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use osq_core::index::BuildParams;
use osq_core::runtime::{InvocationConfig, RuntimeConfig, Topology};
use osq_core::search::QueryOptions;
use osq_core::Exec;
use serde::{Deserialize, Serialize};

/// File locations. Relative paths resolve against the config file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// Base vectors, `.fvecs` or `.bvecs`.
    pub vectors: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
    /// JSON lines, one query per line.
    pub queries: Option<PathBuf>,
    /// Ground truth in ivecs, `-1` padded.
    pub groundtruth: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
}

/// Synthetic workload shape for `generate`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub n: usize,
    pub d: usize,
    /// Latent rank of the cluster model; 0 means `d`.
    pub latent: usize,
    pub clusters: usize,
    pub attributes: usize,
    pub queries: usize,
    /// Cells spanned per clause; one of the pair is drawn per clause.
    pub span_cells: (usize, usize),
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            n: 100_000,
            d: 64,
            latent: 0,
            clusters: 300,
            attributes: 4,
            queries: 1000,
            span_cells: (8, 9),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    pub generate: GenerateConfig,
    pub build: BuildParams,
    pub query: QueryOptions,
    /// Replaces every query's `k`.
    pub k: Option<usize>,
    pub runtime: RuntimeConfig,
    pub exec: Exec,
    /// Price sheet; the bundled sample sheet is used when absent.
    pub prices: Option<PathBuf>,
    /// Batches run back to back.
    pub repeat: usize,
    /// Keep the container pool between repeated batches.
    pub retain_pool: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataPaths::default(),
            generate: GenerateConfig::default(),
            build: BuildParams::default(),
            query: QueryOptions::default(),
            k: None,
            runtime: RuntimeConfig::default(),
            exec: Exec::default(),
            prices: None,
            repeat: 1,
            retain_pool: true,
        }
    }
}

/// Flags shared by every subcommand; each one overrides the config file.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub vectors: Option<PathBuf>,
    #[arg(long, global = true)]
    pub attributes: Option<PathBuf>,
    #[arg(long, global = true)]
    pub queries: Option<PathBuf>,
    #[arg(long, global = true)]
    pub groundtruth: Option<PathBuf>,
    #[arg(long, global = true)]
    pub index_dir: Option<PathBuf>,
    /// Number of coarse partitions.
    #[arg(long, global = true)]
    pub partitions: Option<usize>,
    /// Segment width in bits.
    #[arg(long, global = true)]
    pub segment_size: Option<u32>,
    /// Bits per vector.
    #[arg(long, global = true)]
    pub bit_budget: Option<u32>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Fixed partition-selection threshold.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Binary cut-off percentage.
    #[arg(long, global = true)]
    pub h_perc: Option<f64>,
    #[arg(long, global = true)]
    pub refine_factor: Option<f64>,
    #[arg(short, long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub fanout: Option<usize>,
    #[arg(long, global = true)]
    pub max_level: Option<u32>,
    /// One allocator, no tree.
    #[arg(long, global = true)]
    pub single: bool,
    #[arg(long, global = true)]
    pub qa_batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub result_cache: bool,
    #[arg(long, global = true)]
    pub rebalance: bool,
    /// Start every repeated batch on a fresh container pool.
    #[arg(long, global = true)]
    pub no_retain: bool,
    #[arg(long, global = true)]
    pub sequential: bool,
    #[arg(long, global = true)]
    pub prices: Option<PathBuf>,
    #[arg(long, global = true)]
    pub repeat: Option<usize>,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).context("parsing run configuration")
    }

    /// Loads the config file named in `o` (defaults otherwise) and applies
    /// the overrides.
    pub fn load(o: &Overrides) -> Result<Self> {
        let mut cfg = match &o.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let mut cfg = Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))?;
                let base = path.parent().unwrap_or(Path::new("."));
                let d = &mut cfg.data;
                for p in [&mut d.vectors, &mut d.attributes, &mut d.queries, &mut d.groundtruth, &mut d.index_dir] {
                    resolve(base, p);
                }
                resolve(base, &mut cfg.prices);
                cfg
            }
            None => Self::default(),
        };
        cfg.apply(o);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        let d = &mut self.data;
        for (dst, src) in [
            (&mut d.vectors, &o.vectors),
            (&mut d.attributes, &o.attributes),
            (&mut d.queries, &o.queries),
            (&mut d.groundtruth, &o.groundtruth),
            (&mut d.index_dir, &o.index_dir),
            (&mut self.prices, &o.prices),
        ] {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
        let b = &mut self.build;
        if let Some(x) = o.partitions {
            b.partitions = x;
        }
        if let Some(x) = o.segment_size {
            b.segment_size = x;
        }
        if o.bit_budget.is_some() {
            b.bit_budget = o.bit_budget;
        }
        if let Some(x) = o.beta {
            b.beta = x;
        }
        if let Some(x) = o.seed {
            b.seed = x;
            self.generate.seed = x;
        }
        let q = &mut self.query;
        if o.threshold.is_some() {
            q.threshold_override = o.threshold;
        }
        if let Some(x) = o.h_perc {
            q.h_perc = x;
        }
        if let Some(x) = o.refine_factor {
            q.refine_factor = x;
        }
        q.rebalance |= o.rebalance;
        if o.k.is_some() {
            self.k = o.k;
        }
        let r = &mut self.runtime;
        if o.single {
            r.topology = Topology::Single;
        } else if o.fanout.is_some() || o.max_level.is_some() {
            let (f, l) = match r.topology {
                Topology::Tree(c) => (c.fanout, c.max_level),
                Topology::Single => (10, 1),
            };
            r.topology = Topology::Tree(InvocationConfig {
                fanout: o.fanout.unwrap_or(f),
                max_level: o.max_level.unwrap_or(l),
            });
        }
        if let Some(x) = o.qa_batch_size {
            r.qa_batch_size = x;
        }
        r.result_cache |= o.result_cache;
        if o.sequential {
            self.exec = Exec::Sequential;
        }
        r.exec = self.exec;
        if let Some(x) = o.repeat {
            self.repeat = x;
        }
        self.retain_pool &= !o.no_retain;
    }

    pub fn validate(&self) -> Result<()> {
        self.runtime.validate()?;
        if self.repeat == 0 {
            bail!("repeat must be at least 1");
        }
        if self.k == Some(0) {
            bail!("k must be at least 1");
        }
        if !(self.query.h_perc > 0.0 && self.query.h_perc <= 100.0) {
            bail!("h_perc must lie in (0, 100]");
        }
        if !(self.query.refine_factor >= 1.0) {
            bail!("refine_factor must be at least 1");
        }
        Ok(())
    }

    pub fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        match p {
            Some(p) => Ok(p),
            None => bail!("no {what} path given (config [data] section or --{})", what.replace(' ', "-")),
        }
    }
}
