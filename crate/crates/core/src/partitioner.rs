//! Capacity-constrained k-means partitioning and the partition-selection
//! distance threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitmap::Bitmap;
use crate::dataset::VectorDataset;
use crate::error::{Error, Result};
use crate::par::{self, Exec};

pub const MAX_KMEANS_ITER: usize = 50;
const ROW_CHUNK: usize = 2048;

#[inline]
fn sq_dist(x: &[f32], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(&a, &b)| {
            let t = a as f64 - b;
            t * t
        })
        .sum()
}

/// Coarse partitions of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSet {
    pub d: usize,
    /// `P × d`, original vector space.
    pub centroids: Vec<f64>,
    /// Global id → partition.
    pub assignment: Vec<u32>,
    /// Total squared distance to the assigned centroid after each iteration.
    pub cost_history: Vec<f64>,
}

impl PartitionSet {
    pub fn from_assignment(d: usize, centroids: Vec<f64>, assignment: Vec<u32>) -> Result<Self> {
        let p = centroids.len() / d.max(1);
        if d == 0 || centroids.len() != p * d || p == 0 {
            return Err(Error::Format("centroid matrix shape".into()));
        }
        if assignment.iter().any(|&a| a as usize >= p) {
            return Err(Error::Format("assignment refers to a missing partition".into()));
        }
        Ok(Self {
            d,
            centroids,
            assignment,
            cost_history: Vec::new(),
        })
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.centroids.len() / self.d
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn centroid(&self, p: usize) -> &[f64] {
        &self.centroids[p * self.d..(p + 1) * self.d]
    }

    /// Global ids of partition `p`, ascending.
    pub fn members(&self, p: usize) -> Vec<u32> {
        (0..self.n() as u32)
            .filter(|&g| self.assignment[g as usize] == p as u32)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.p()];
        for &a in &self.assignment {
            s[a as usize] += 1;
        }
        s
    }

    /// Residency bitmap `P_V[p]` over global ids for every partition.
    pub fn residency(&self) -> Vec<Bitmap> {
        let mut out = vec![Bitmap::zeros(self.n()); self.p()];
        for (g, &a) in self.assignment.iter().enumerate() {
            out[a as usize].set(g);
        }
        out
    }

    /// Global id → row within its partition (rank among the partition's
    /// ascending members).
    pub fn local_rows(&self) -> Vec<u32> {
        let mut next = vec![0u32; self.p()];
        self.assignment
            .iter()
            .map(|&a| {
                let r = next[a as usize];
                next[a as usize] += 1;
                r
            })
            .collect()
    }

    /// Euclidean distances from `x` to every centroid.
    pub fn centroid_distances(&self, x: &[f32]) -> Vec<f64> {
        (0..self.p()).map(|p| sq_dist(x, self.centroid(p)).sqrt()).collect()
    }
}

/// Capacity per partition: `⌈n/P⌉ · (1 + slack)`, rounded down.
pub fn capacity(n: usize, p: usize, slack: f64) -> usize {
    let base = n.div_ceil(p);
    ((base as f64 * (1.0 + slack.max(0.0)) + 1e-9).floor() as usize).max(base)
}

fn kmeans_pp(ds: &VectorDataset, p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = ds.d();
    let n = ds.n();
    let mut centroids = Vec::with_capacity(p * d);
    let first = rng.random_range(0..n);
    centroids.extend(ds.row(first).iter().map(|&x| x as f64));
    let mut best: Vec<f64> = (0..n).map(|i| sq_dist(ds.row(i), &centroids[..d])).collect();
    for _ in 1..p {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in best.iter().enumerate() {
                if t < w {
                    chosen = i;
                    break;
                }
                t -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend(ds.row(pick).iter().map(|&x| x as f64));
        let cen = &centroids[start..start + d];
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(ds.row(i), cen));
        }
    }
    centroids
}

/// Greedy capacity-constrained assignment: rows in ascending order of
/// distance to their nearest centroid (ties by row) each take the nearest
/// centroid that still has room.
fn constrained_assign(exec: Exec, ds: &VectorDataset, centroids: &[f64], p: usize, cap: usize) -> Vec<u32> {
    let d = ds.d();
    let n = ds.n();
    let dists: Vec<Vec<f64>> = par::map_row_chunks(exec, n, ROW_CHUNK, |range| {
        range
            .map(|i| {
                (0..p)
                    .map(|c| sq_dist(ds.row(i), &centroids[c * d..(c + 1) * d]))
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let nearest: Vec<f64> = dists
        .iter()
        .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(a.cmp(&b)));
    let mut load = vec![0usize; p];
    let mut assign = vec![0u32; n];
    let mut prefs: Vec<usize> = Vec::with_capacity(p);
    for i in order {
        prefs.clear();
        prefs.extend(0..p);
        let row = &dists[i];
        prefs.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        let c = *prefs
            .iter()
            .find(|&&c| load[c] < cap)
            .expect("total capacity covers n");
        load[c] += 1;
        assign[i] = c as u32;
    }
    assign
}

fn update_centroids(ds: &VectorDataset, assign: &[u32], old: &[f64], p: usize) -> Vec<f64> {
    let d = ds.d();
    let mut sums = vec![0.0f64; p * d];
    let mut counts = vec![0usize; p];
    for (i, &a) in assign.iter().enumerate() {
        let a = a as usize;
        counts[a] += 1;
        for (s, &x) in sums[a * d..(a + 1) * d].iter_mut().zip(ds.row(i)) {
            *s += x as f64;
        }
    }
    for c in 0..p {
        let dst = &mut sums[c * d..(c + 1) * d];
        if counts[c] == 0 {
            dst.copy_from_slice(&old[c * d..(c + 1) * d]);
        } else {
            dst.iter_mut().for_each(|s| *s /= counts[c] as f64);
        }
    }
    sums
}

fn total_cost(exec: Exec, ds: &VectorDataset, centroids: &[f64], assign: &[u32]) -> f64 {
    let d = ds.d();
    par::map_row_chunks(exec, ds.n(), ROW_CHUNK, |range| {
        range
            .map(|i| {
                let a = assign[i] as usize;
                sq_dist(ds.row(i), &centroids[a * d..(a + 1) * d])
            })
            .sum::<f64>()
    })
    .into_iter()
    .sum()
}

/// Balanced k-means with k-means++ seeding. Rows are addressed by their
/// global id (`ds.ids()`).
pub fn balanced_partition(
    exec: Exec,
    ds: &VectorDataset,
    p: usize,
    slack: f64,
    seed: u64,
) -> Result<PartitionSet> {
    let n = ds.n();
    if p == 0 || p > n {
        return Err(Error::Config(format!("cannot form {p} partitions from {n} vectors")));
    }
    let d = ds.d();
    let cap = capacity(n, p, slack);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = if p == 1 {
        vec![0.0; d]
    } else {
        kmeans_pp(ds, p, &mut rng)
    };
    let mut assign = constrained_assign(exec, ds, &centroids, p, cap);
    let mut history = Vec::new();
    for _ in 0..MAX_KMEANS_ITER {
        centroids = update_centroids(ds, &assign, &centroids, p);
        let kept = total_cost(exec, ds, &centroids, &assign);
        history.push(kept);
        if p == 1 {
            break;
        }
        let next = constrained_assign(exec, ds, &centroids, p, cap);
        if next == assign {
            break;
        }
        // the greedy pass is not optimal; only accept it when it helps
        if total_cost(exec, ds, &centroids, &next) >= kept {
            break;
        }
        assign = next;
    }
    let mut by_id = vec![0u32; n];
    for (i, &g) in ds.ids().iter().enumerate() {
        by_id[g as usize] = assign[i];
    }
    let mut set = PartitionSet::from_assignment(d, centroids, by_id)?;
    set.cost_history = history;
    Ok(set)
}

/// `T = 1 + σ_µ/µ_µ + β√d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdModel {
    pub t: f64,
    pub beta: f64,
    pub mu_mu: f64,
    pub sigma_mu: f64,
    /// Rows left out because the vector coincides with its centroid.
    pub excluded_rows: usize,
}

impl ThresholdModel {
    /// A fixed `T` that bypasses the fitted statistics.
    pub fn fixed(t: f64) -> Self {
        Self {
            t,
            beta: 0.0,
            mu_mu: 1.0,
            sigma_mu: 0.0,
            excluded_rows: 0,
        }
    }
}

/// Ratio matrix `dist(v, c_p) / dist(v, c_home)` (Euclidean) summarised by
/// the mean of its row means and the mean of its row standard deviations.
pub fn compute_threshold(
    exec: Exec,
    ds: &VectorDataset,
    partitions: &PartitionSet,
    beta: f64,
) -> Result<ThresholdModel> {
    if partitions.p() == 0 || partitions.d != ds.d() {
        return Err(Error::DimensionMismatch {
            expected: partitions.d,
            actual: ds.d(),
        });
    }
    let p = partitions.p();
    let stats: Vec<(f64, f64, usize, usize)> = par::map_row_chunks(exec, ds.n(), ROW_CHUNK, |range| {
        let (mut sum_mean, mut sum_std, mut rows, mut excluded) = (0.0, 0.0, 0, 0);
        for i in range {
            let home = partitions.assignment[ds.ids()[i] as usize] as usize;
            let dists = partitions.centroid_distances(ds.row(i));
            let h = dists[home];
            if h == 0.0 {
                excluded += 1;
                continue;
            }
            let ratios: Vec<f64> = dists.iter().map(|x| x / h).collect();
            let mean = ratios.iter().sum::<f64>() / p as f64;
            let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / p as f64;
            sum_mean += mean;
            sum_std += var.sqrt();
            rows += 1;
        }
        (sum_mean, sum_std, rows, excluded)
    });
    let (mut sum_mean, mut sum_std, mut rows, mut excluded) = (0.0, 0.0, 0usize, 0usize);
    for (m, s, r, e) in stats {
        sum_mean += m;
        sum_std += s;
        rows += r;
        excluded += e;
    }
    if rows == 0 {
        return Err(Error::InsufficientData(
            "every vector coincides with its centroid".into(),
        ));
    }
    let mu_mu = sum_mean / rows as f64;
    let sigma_mu = sum_std / rows as f64;
    Ok(ThresholdModel {
        t: 1.0 + sigma_mu / mu_mu + beta * (ds.d() as f64).sqrt(),
        beta,
        mu_mu,
        sigma_mu,
        excluded_rows: excluded,
    })
}
