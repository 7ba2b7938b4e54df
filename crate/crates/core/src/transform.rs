//! Per-partition decorrelating rotation (KLT) and per-dimension standardization.
//!
//! Both models work on row-major matrices. Input vectors are `f32`; anything
//! produced by a transform is `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};

const ROW_CHUNK: usize = 1024;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Orthonormal rotation onto the covariance eigenbasis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KltModel {
    pub mean: Vec<f64>,
    /// `d × d`, row `i` is the eigenvector for `eigenvalues[i]`.
    pub basis: Vec<f64>,
    /// Non-increasing, non-negative.
    pub eigenvalues: Vec<f64>,
}

impl KltModel {
    pub fn identity(d: usize) -> Self {
        let mut basis = vec![0.0; d * d];
        for i in 0..d {
            basis[i * d + i] = 1.0;
        }
        Self {
            mean: vec![0.0; d],
            basis,
            eigenvalues: vec![0.0; d],
        }
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.mean.len()
    }

    /// `out = basis · (x − mean)`.
    pub fn transform_into(&self, x: &[f32], centered: &mut [f64], out: &mut [f64]) {
        let d = self.d();
        for ((c, &xi), m) in centered.iter_mut().zip(x).zip(&self.mean) {
            *c = xi as f64 - m;
        }
        for (o, row) in out.iter_mut().zip(self.basis.chunks_exact(d)) {
            *o = row.iter().zip(centered.iter()).map(|(b, c)| b * c).sum();
        }
    }

    pub fn transform(&self, x: &[f32]) -> Vec<f64> {
        let d = self.d();
        let mut centered = vec![0.0; d];
        let mut out = vec![0.0; d];
        self.transform_into(x, &mut centered, &mut out);
        out
    }

    /// `basisᵀ · y + mean`.
    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        let d = self.d();
        let mut out = self.mean.clone();
        for (yi, row) in y.iter().zip(self.basis.chunks_exact(d)) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += yi * b;
            }
        }
        out
    }
}

/// Covariance eigendecomposition of the centered rows. Requires `n ≥ 2`.
pub fn fit_klt(exec: Exec, rows: &[f32], d: usize) -> Result<KltModel> {
    if d == 0 || !rows.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: rows.len() % d.max(1),
        });
    }
    let n = rows.len() / d;
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "KLT needs at least 2 vectors, got {n}"
        )));
    }
    let mean = column_means(exec, rows, d);
    let cov = covariance(exec, rows, d, &mean);
    let (eigenvalues, basis) = symmetric_eigen(cov, d);
    Ok(KltModel {
        mean,
        basis,
        eigenvalues,
    })
}

/// Rotates every row; output is `n × d` `f64`.
pub fn apply_klt(exec: Exec, model: &KltModel, rows: &[f32], d: usize) -> Result<Vec<f64>> {
    if d != model.d() || !rows.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: model.d(),
            actual: d,
        });
    }
    let n = rows.len() / d;
    let chunks = par::map_row_chunks(exec, n, ROW_CHUNK, |range| {
        let mut centered = vec![0.0; d];
        let mut out = vec![0.0; range.len() * d];
        for (o, i) in out.chunks_exact_mut(d).zip(range) {
            model.transform_into(&rows[i * d..(i + 1) * d], &mut centered, o);
        }
        out
    });
    Ok(chunks.concat())
}

fn column_means(exec: Exec, rows: &[f32], d: usize) -> Vec<f64> {
    let n = rows.len() / d;
    let partial = par::map_row_chunks(exec, n, ROW_CHUNK, |range| {
        let mut s = vec![0.0f64; d];
        for i in range {
            for (acc, &x) in s.iter_mut().zip(&rows[i * d..(i + 1) * d]) {
                *acc += x as f64;
            }
        }
        s
    });
    let mut mean = vec![0.0; d];
    for p in partial {
        for (m, s) in mean.iter_mut().zip(p) {
            *m += s;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    mean
}

/// Population covariance (divides by `n`).
fn covariance(exec: Exec, rows: &[f32], d: usize, mean: &[f64]) -> Vec<f64> {
    let n = rows.len() / d;
    let partial = par::map_row_chunks(exec, n, ROW_CHUNK, |range| {
        let mut c = vec![0.0f64; d * d];
        let mut x = vec![0.0f64; d];
        for i in range {
            for ((xi, &v), m) in x.iter_mut().zip(&rows[i * d..(i + 1) * d]).zip(mean) {
                *xi = v as f64 - m;
            }
            for a in 0..d {
                let xa = x[a];
                let row = &mut c[a * d..(a + 1) * d];
                for b in a..d {
                    row[b] += xa * x[b];
                }
            }
        }
        c
    });
    let mut cov = vec![0.0; d * d];
    for p in partial {
        for (c, v) in cov.iter_mut().zip(p) {
            *c += v;
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] / n as f64;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    cov
}

/// Cyclic Jacobi eigendecomposition of a symmetric `d × d` matrix.
/// Returns eigenvalues (descending, clamped at 0) and the eigenvectors as
/// rows, each with its first non-negligible entry positive.
pub fn symmetric_eigen(mut a: Vec<f64>, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..d {
            for q in p + 1..d {
                off += a[p * d + q] * a[p * d + q];
            }
        }
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[j * d + j].total_cmp(&a[i * d + i]).then(i.cmp(&j)));
    let eigenvalues = order.iter().map(|&i| a[i * d + i].max(0.0)).collect();
    let mut basis = vec![0.0; d * d];
    for (r, &col) in order.iter().enumerate() {
        let row = &mut basis[r * d..(r + 1) * d];
        for k in 0..d {
            row[k] = v[k * d + col];
        }
        if let Some(first) = row.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                row.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    (eigenvalues, basis)
}

/// Per-dimension mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizeModel {
    pub mean: Vec<f64>,
    /// Always positive; zero-variance dimensions store 1.
    pub std: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

impl StandardizeModel {
    #[inline]
    pub fn apply_into(&self, y: &[f64], out: &mut [f64]) {
        for (((o, &x), m), s) in out.iter_mut().zip(y).zip(&self.mean).zip(&self.std) {
            *o = (x - m) / s;
        }
    }
}

const ZERO_STD: f64 = 1e-12;

/// Fits and applies standardization to an `n × d` matrix.
pub fn standardize(rows: &[f64], d: usize) -> Result<(StandardizeModel, Vec<f64>)> {
    if d == 0 || rows.is_empty() || !rows.len().is_multiple_of(d) {
        return Err(Error::InsufficientData(
            "standardize needs at least one row of dimension >= 1".into(),
        ));
    }
    let n = rows.len() / d;
    let mut mean = vec![0.0; d];
    for row in rows.chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in rows.chunks_exact(d) {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let mut zero_variance = vec![false; d];
    let std: Vec<f64> = var
        .iter()
        .zip(zero_variance.iter_mut())
        .map(|(v, z)| {
            let s = (v / n as f64).sqrt();
            if s <= ZERO_STD {
                *z = true;
                1.0
            } else {
                s
            }
        })
        .collect();
    let model = StandardizeModel {
        mean,
        std,
        zero_variance,
    };
    let mut out = vec![0.0; rows.len()];
    for (o, row) in out.chunks_exact_mut(d).zip(rows.chunks_exact(d)) {
        model.apply_into(row, o);
    }
    // zero-variance columns are exactly zero
    for (j, z) in model.zero_variance.iter().enumerate() {
        if *z {
            for o in out.chunks_exact_mut(d) {
                o[j] = 0.0;
            }
        }
    }
    Ok((model, out))
}
