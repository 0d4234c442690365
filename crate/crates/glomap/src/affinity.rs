//! Edge weights on both sides of the objective: membership strengths
//! `mu = exp(-d/tau)` on the input side and the heavy-tailed kernel
//! `q = 1/(1 + a r^(2b))` on the embedding side, together with the row-wise
//! neighbor sampler the stochastic loss needs.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geodesic::GlobalDistanceMatrix;

/// Embedding-side kernel parameters of `q = 1/(1 + a r^(2b))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedKernelParams {
    pub a: f64,
    pub b: f64,
}

impl Default for EmbedKernelParams {
    fn default() -> Self {
        EmbedKernelParams { a: 1.57694, b: 0.8951 }
    }
}

/// Distance floor regularizing the kernel gradients at coincident points.
pub const GRAD_DIST_FLOOR: f64 = 1e-3;

/// Membership strengths at one temperature, with per-row cumulative tables
/// for sampling neighbors proportionally to their weight. Immutable after
/// construction.
#[derive(Debug, Clone)]
pub struct MembershipTable {
    n: usize,
    tau: f64,
    row_sums: Vec<f64>,
    storage: Storage,
}

#[derive(Debug, Clone)]
enum Storage {
    /// Row-major n*n weights and their row-wise running sums.
    Dense { mu: Vec<f64>, cum: Vec<f64> },
    /// Weights only on the finite pattern of a truncated distance matrix.
    Sparse { cols: Vec<Vec<u32>>, mu: Vec<Vec<f64>>, cum: Vec<Vec<f64>> },
}

/// Convert distances to membership strengths: `mu_ij = exp(-d_ij / tau)` for
/// finite off-diagonal entries, zero on the diagonal and across components.
pub fn membership(d: &GlobalDistanceMatrix, tau: f64) -> MembershipTable {
    assert!(tau > 0.0, "tau must be positive");
    let n = d.n();
    match d.pattern() {
        None => {
            let mut mu = vec![0.0f64; n * n];
            let mut cum = vec![0.0f64; n * n];
            let dense = d.dense();
            let row_sums: Vec<f64> = mu
                .par_chunks_mut(n)
                .zip(cum.par_chunks_mut(n))
                .enumerate()
                .map(|(i, (mu_row, cum_row))| {
                    let drow = dense.row(i);
                    let mut acc = 0.0;
                    for j in 0..n {
                        let v = drow[j];
                        let m = if j == i || !v.is_finite() { 0.0 } else { (-v / tau).exp() };
                        mu_row[j] = m;
                        acc += m;
                        cum_row[j] = acc;
                    }
                    acc
                })
                .collect();
            MembershipTable { n, tau, row_sums, storage: Storage::Dense { mu, cum } }
        }
        Some(pattern) => {
            let mut cols = Vec::with_capacity(n);
            let mut mu = Vec::with_capacity(n);
            let mut cum = Vec::with_capacity(n);
            let mut row_sums = Vec::with_capacity(n);
            for i in 0..n {
                let pat = &pattern[i];
                let mut mrow = Vec::with_capacity(pat.len());
                let mut crow = Vec::with_capacity(pat.len());
                let mut acc = 0.0;
                for &j in pat {
                    let v = d.get(i, j as usize);
                    let m = if v.is_finite() { (-v / tau).exp() } else { 0.0 };
                    mrow.push(m);
                    acc += m;
                    crow.push(acc);
                }
                cols.push(pat.clone());
                mu.push(mrow);
                cum.push(crow);
                row_sums.push(acc);
            }
            MembershipTable { n, tau, row_sums, storage: Storage::Sparse { cols, mu, cum } }
        }
    }
}

impl MembershipTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Row sum `mu_i.` (the total membership mass of point i).
    #[inline]
    pub fn row_sum(&self, i: usize) -> f64 {
        self.row_sums[i]
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    /// Membership strength of the pair (i, j); zero on the diagonal, across
    /// components, and on truncated-away entries.
    #[inline]
    pub fn mu(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense { mu, .. } => mu[i * self.n + j],
            Storage::Sparse { cols, mu, .. } => match cols[i].binary_search(&(j as u32)) {
                Ok(t) => mu[i][t],
                Err(_) => 0.0,
            },
        }
    }

    /// Draw a neighbor of `i` with probability `mu_ij / mu_i.`.
    pub fn sample_neighbor<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<usize> {
        let total = self.row_sums[i];
        if !(total > 0.0) {
            return Err(Error::IsolatedRow(i));
        }
        let u = rng.gen::<f64>() * total;
        match &self.storage {
            Storage::Dense { mu, cum } => {
                let row = &cum[i * self.n..(i + 1) * self.n];
                let mut j = row.partition_point(|&c| c <= u);
                if j >= self.n {
                    // Guard against u landing exactly on the total.
                    j = (0..self.n).rev().find(|&t| mu[i * self.n + t] > 0.0).unwrap();
                }
                Ok(j)
            }
            Storage::Sparse { cols, mu, cum } => {
                let row = &cum[i];
                let mut t = row.partition_point(|&c| c <= u);
                if t >= row.len() {
                    t = (0..row.len()).rev().find(|&s| mu[i][s] > 0.0).unwrap();
                }
                Ok(cols[i][t] as usize)
            }
        }
    }
}

/// Embedding-side edge weight in (0, 1]; equals 1 at coincident points.
#[inline]
pub fn q_embed(zi: &[f64], zj: &[f64], k: &EmbedKernelParams) -> f64 {
    let r2: f64 = zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 / (1.0 + k.a * r2.sqrt().powf(2.0 * k.b))
}

/// Coefficient c such that `d(-log q)/d zi = c * (zi - zj)` (attractive).
/// The distance is floored at [`GRAD_DIST_FLOOR`].
#[inline]
pub(crate) fn attractive_coeff(r: f64, k: &EmbedKernelParams) -> f64 {
    let rf = r.max(GRAD_DIST_FLOOR);
    let pow = rf.powf(2.0 * k.b - 2.0);
    2.0 * k.a * k.b * pow / (1.0 + k.a * pow * rf * rf)
}

/// Coefficient c such that `d(-log(1-q))/d zi = c * (zi - zj)` (repulsive).
/// The distance is floored at [`GRAD_DIST_FLOOR`].
#[inline]
pub(crate) fn repulsive_coeff(r: f64, k: &EmbedKernelParams) -> f64 {
    let rf = r.max(GRAD_DIST_FLOOR);
    -2.0 * k.b / (rf * rf * (1.0 + k.a * rf.powf(2.0 * k.b)))
}

/// Gradients with respect to `zi` of the attractive term `-log q` and the
/// repulsive term `-log(1 - q)`.
pub fn grad_q_terms(zi: &[f64], zj: &[f64], k: &EmbedKernelParams) -> (Vec<f64>, Vec<f64>) {
    let r2: f64 = zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum();
    let r = r2.sqrt();
    let ca = attractive_coeff(r, k);
    let cr = repulsive_coeff(r, k);
    let attr = zi.iter().zip(zj).map(|(a, b)| ca * (a - b)).collect();
    let rep = zi.iter().zip(zj).map(|(a, b)| cr * (a - b)).collect();
    (attr, rep)
}
