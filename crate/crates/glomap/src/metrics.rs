//! Embedding quality measures: leave-one-out KNN classification accuracy,
//! a kernel-density KL divergence against reference coordinates, pairwise
//! distance correlation, trustworthiness and the silhouette coefficient.
//! All are deterministic; ties in distance break toward the smaller index
//! and ties in votes toward the smaller label.

use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Named scalar results with the parameters they were computed under.
#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    pub entries: Vec<MetricEntry>,
}

#[derive(Debug, Clone)]
pub struct MetricEntry {
    pub metric: String,
    pub param: String,
    pub value: f64,
}

impl MetricReport {
    pub fn push(&mut self, metric: impl Into<String>, param: impl Into<String>, value: f64) {
        self.entries.push(MetricEntry { metric: metric.into(), param: param.into(), value });
    }

    /// Write as `metric,param,value` CSV.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "metric,param,value")?;
        for e in &self.entries {
            writeln!(w, "{},{},{}", e.metric, e.param, e.value)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest rows of `pool` to `query` by Euclidean distance, ties
/// broken by the smaller index; `skip` excludes one pool row (for
/// leave-one-out evaluation).
fn k_nearest(pool: &ArrayView2<f64>, query: &[f64], k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut ord: Vec<(f64, u32)> = (0..pool.nrows())
        .filter(|&j| Some(j) != skip)
        .map(|j| (sq_dist(pool.row(j).as_slice().unwrap(), query), j as u32))
        .collect();
    ord.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ord.truncate(k);
    ord.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ord.into_iter().map(|(_, j)| j as usize).collect()
}

/// Majority label among `votes`, smaller label winning ties.
fn majority(votes: impl Iterator<Item = i64>) -> i64 {
    let mut counts: std::collections::BTreeMap<i64, usize> = std::collections::BTreeMap::new();
    for v in votes {
        *counts.entry(v).or_insert(0) += 1;
    }
    let mut best = (i64::MIN, 0usize);
    for (&label, &count) in &counts {
        if count > best.1 {
            best = (label, count);
        }
    }
    best.0
}

/// Leave-one-out K-nearest-neighbor classification accuracy on the rows of
/// `z` under Euclidean distance.
pub fn knn_accuracy(z: &ArrayView2<f64>, labels: &[i64], k: usize) -> Result<f64> {
    let n = z.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("need 1 <= K < n, got K={k}, n={n}")));
    }
    let correct: usize = (0..n)
        .into_par_iter()
        .map(|i| {
            let nn = k_nearest(z, z.row(i).as_slice().unwrap(), k, Some(i));
            let vote = majority(nn.iter().map(|&j| labels[j]));
            usize::from(vote == labels[i])
        })
        .sum();
    Ok(correct as f64 / n as f64)
}

/// Leave-one-out accuracy for several K at once, sharing one neighbor
/// search. Agrees with [`knn_accuracy`] entry by entry.
pub fn knn_accuracy_sweep(
    z: &ArrayView2<f64>,
    labels: &[i64],
    ks: &[usize],
) -> Result<Vec<f64>> {
    let n = z.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    let &kmax = ks
        .iter()
        .max()
        .ok_or_else(|| Error::invalid("empty K grid"))?;
    if ks.iter().any(|&k| k == 0) || kmax >= n {
        return Err(Error::invalid(format!("need 1 <= K < n for every K, n={n}")));
    }
    let per_point: Vec<Vec<i64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            k_nearest(z, z.row(i).as_slice().unwrap(), kmax, Some(i))
                .into_iter()
                .map(|j| labels[j])
                .collect()
        })
        .collect();
    Ok(ks
        .iter()
        .map(|&k| {
            let correct = per_point
                .iter()
                .zip(labels)
                .filter(|(nn, &lab)| majority(nn[..k].iter().copied()) == lab)
                .count();
            correct as f64 / n as f64
        })
        .collect())
}

/// Accuracy of a K-nearest-neighbor classifier fit on `(train_z,
/// train_labels)` and evaluated on `(query_z, query_labels)`.
pub fn knn_classify_accuracy(
    train_z: &ArrayView2<f64>,
    train_labels: &[i64],
    query_z: &ArrayView2<f64>,
    query_labels: &[i64],
    k: usize,
) -> Result<f64> {
    let n = train_z.nrows();
    if train_labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: train_labels.len() });
    }
    if query_labels.len() != query_z.nrows() {
        return Err(Error::DimensionMismatch {
            expected: query_z.nrows(),
            got: query_labels.len(),
        });
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 <= K <= n_train, got K={k}")));
    }
    if query_z.nrows() == 0 {
        return Err(Error::invalid("empty query set"));
    }
    let correct: usize = (0..query_z.nrows())
        .into_par_iter()
        .map(|i| {
            let nn = k_nearest(train_z, query_z.row(i).as_slice().unwrap(), k, None);
            let vote = majority(nn.iter().map(|&j| train_labels[j]));
            usize::from(vote == query_labels[i])
        })
        .sum();
    Ok(correct as f64 / query_z.nrows() as f64)
}

/// Normalized kernel mass of each point: `f[i] = s[i] / sum(s)` with
/// `s[i] = sum_j exp(-d(i,j)^2 / sigma)` (the self term included).
fn kernel_density(points: &ArrayView2<f64>, sigma: f64) -> Vec<f64> {
    let n = points.nrows();
    let mut s: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = points.row(i);
            let pi = pi.as_slice().unwrap();
            (0..n)
                .map(|j| (-sq_dist(pi, points.row(j).as_slice().unwrap()) / sigma).exp())
                .sum()
        })
        .collect();
    let total: f64 = s.iter().sum();
    for v in &mut s {
        *v /= total;
    }
    s
}

/// KL divergence between the kernel-mass distributions of the reference
/// coordinates and of the embedding at length scale `sigma`.
pub fn dtm_kl(x0: &ArrayView2<f64>, z: &ArrayView2<f64>, sigma: f64) -> Result<f64> {
    if x0.nrows() != z.nrows() {
        return Err(Error::DimensionMismatch { expected: x0.nrows(), got: z.nrows() });
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    let fx = kernel_density(x0, sigma);
    let fz = kernel_density(z, sigma);
    Ok(fx.iter().zip(&fz).map(|(&a, &b)| a * (a / b).ln()).sum())
}

/// Pearson correlation between the two vectors of all pairwise Euclidean
/// distances. Exact over all n(n-1)/2 pairs.
pub fn distance_correlation(x0: &ArrayView2<f64>, z: &ArrayView2<f64>) -> Result<f64> {
    let n = x0.nrows();
    if z.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: z.nrows() });
    }
    if n < 3 {
        return Err(Error::invalid("need at least 3 points"));
    }
    let pairs: Vec<(u32, u32)> = (0..n as u32)
        .flat_map(|i| ((i + 1)..n as u32).map(move |j| (i, j)))
        .collect();
    pearson_over_pairs(x0, z, &pairs)
}

/// Distance correlation with a seeded pair subsample once the pair count
/// exceeds `max_pairs`. Returns the value and the number of pairs used.
pub fn distance_correlation_sampled(
    x0: &ArrayView2<f64>,
    z: &ArrayView2<f64>,
    max_pairs: usize,
    seed: u64,
) -> Result<(f64, usize)> {
    use rand::{Rng, SeedableRng};
    let n = x0.nrows();
    if z.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: z.nrows() });
    }
    if n < 3 {
        return Err(Error::invalid("need at least 3 points"));
    }
    let total = n * (n - 1) / 2;
    if total <= max_pairs {
        return Ok((distance_correlation(x0, z)?, total));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(max_pairs);
    while pairs.len() < max_pairs {
        let i = rng.gen_range(0..n as u32);
        let j = rng.gen_range(0..n as u32);
        if i < j {
            pairs.push((i, j));
        } else if j < i {
            pairs.push((j, i));
        }
    }
    Ok((pearson_over_pairs(x0, z, &pairs)?, max_pairs))
}

fn pearson_over_pairs(
    x0: &ArrayView2<f64>,
    z: &ArrayView2<f64>,
    pairs: &[(u32, u32)],
) -> Result<f64> {
    let dist = |m: &ArrayView2<f64>, i: u32, j: u32| {
        sq_dist(
            m.row(i as usize).as_slice().unwrap(),
            m.row(j as usize).as_slice().unwrap(),
        )
        .sqrt()
    };
    let c = pairs.len() as f64;
    let (sum_a, sum_b) = pairs
        .par_iter()
        .map(|&(i, j)| (dist(x0, i, j), dist(z, i, j)))
        .reduce(|| (0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
    let (mean_a, mean_b) = (sum_a / c, sum_b / c);
    let (saa, sbb, sab) = pairs
        .par_iter()
        .map(|&(i, j)| {
            let da = dist(x0, i, j) - mean_a;
            let db = dist(z, i, j) - mean_b;
            (da * da, db * db, da * db)
        })
        .reduce(|| (0.0, 0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1, acc.2 + v.2));
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::Metric("distance correlation undefined: zero variance".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Trustworthiness of the embedding's K-neighborhoods with respect to the
/// input space: points that enter an embedding neighborhood are penalized by
/// their input-space rank excess, normalized so 1 is perfect.
pub fn trustworthiness(x: &ArrayView2<f64>, z: &ArrayView2<f64>, k: usize) -> Result<f64> {
    let n = x.nrows();
    if z.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: z.nrows() });
    }
    if k == 0 || 2 * k >= n {
        return Err(Error::invalid(format!("need 1 <= K < n/2, got K={k}, n={n}")));
    }
    let penalty: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            // Input-space ranks of every j relative to i (1-based).
            let xi = x.row(i);
            let xi = xi.as_slice().unwrap();
            let mut ord: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(xi, x.row(j).as_slice().unwrap()), j as u32))
                .collect();
            ord.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut rank = vec![0usize; n];
            for (r, &(_, j)) in ord.iter().enumerate() {
                rank[j as usize] = r + 1;
            }
            let mut p = 0.0;
            for j in k_nearest(z, z.row(i).as_slice().unwrap(), k, Some(i)) {
                if rank[j] > k {
                    p += (rank[j] - k) as f64;
                }
            }
            p
        })
        .sum();
    let norm = 2.0 / (n as f64 * k as f64 * (2.0 * n as f64 - 3.0 * k as f64 - 1.0));
    Ok(1.0 - norm * penalty)
}

/// Mean silhouette coefficient over all points: `(b - a) / max(a, b)` with
/// `a` the mean distance to the own cluster (excluding self) and `b` the
/// smallest mean distance to another cluster. Points in singleton clusters
/// score 0, as do points with `a = b = 0`.
pub fn silhouette(z: &ArrayView2<f64>, labels: &[i64]) -> Result<f64> {
    let n = z.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    let mut clusters: Vec<i64> = labels.to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    if clusters.len() < 2 {
        return Err(Error::Metric("silhouette needs at least 2 clusters".into()));
    }
    let cluster_of: std::collections::HashMap<i64, usize> =
        clusters.iter().enumerate().map(|(t, &l)| (l, t)).collect();
    let sizes: Vec<usize> = {
        let mut s = vec![0usize; clusters.len()];
        for &l in labels {
            s[cluster_of[&l]] += 1;
        }
        s
    };

    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = cluster_of[&labels[i]];
            if sizes[own] <= 1 {
                return 0.0;
            }
            let mut sums = vec![0.0f64; clusters.len()];
            let zi = z.row(i);
            let zi = zi.as_slice().unwrap();
            for j in 0..n {
                if j == i {
                    continue;
                }
                sums[cluster_of[&labels[j]]] += sq_dist(zi, z.row(j).as_slice().unwrap()).sqrt();
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let mut b = f64::INFINITY;
            for (c, &s) in sums.iter().enumerate() {
                if c != own && sizes[c] > 0 {
                    b = b.min(s / sizes[c] as f64);
                }
            }
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .sum();
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_clouds(n_per: usize, gap: f64, seed: u64) -> (Array2<f64>, Vec<i64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = Array2::zeros((2 * n_per, 2));
        let mut labels = Vec::new();
        for i in 0..2 * n_per {
            let c = if i < n_per { 0.0 } else { gap };
            z[[i, 0]] = c + rng.gen_range(-0.5..0.5);
            z[[i, 1]] = rng.gen_range(-0.5..0.5);
            labels.push(i64::from(i >= n_per));
        }
        (z, labels)
    }

    #[test]
    fn separated_clouds_classify_perfectly() {
        let (z, labels) = two_clouds(20, 50.0, 1);
        assert_eq!(knn_accuracy(&z.view(), &labels, 1).unwrap(), 1.0);
    }

    #[test]
    fn full_neighborhood_matches_majority_class_oracle() {
        // Random labels over one cloud with K = n-1: the prediction for i is
        // the majority among the other labels, so accuracy has a closed form.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 31;
        let z = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<i64> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let got = knn_accuracy(&z.view(), &labels, n - 1).unwrap();

        let mut correct = 0;
        for i in 0..n {
            let vote =
                majority(labels.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &l)| l));
            if vote == labels[i] {
                correct += 1;
            }
        }
        assert_eq!(got, correct as f64 / n as f64);
    }

    #[test]
    fn knn_sweep_matches_single_calls() {
        let (z, labels) = two_clouds(30, 4.0, 3);
        let ks: Vec<usize> = (1..=20).collect();
        let sweep = knn_accuracy_sweep(&z.view(), &labels, &ks).unwrap();
        for (&k, &acc) in ks.iter().zip(&sweep) {
            assert!((0.0..=1.0).contains(&acc));
            assert_eq!(acc, knn_accuracy(&z.view(), &labels, k).unwrap());
        }
    }

    #[test]
    fn cross_classifier_on_shared_structure() {
        let (train, labels) = two_clouds(25, 20.0, 4);
        let (query, qlabels) = two_clouds(10, 20.0, 5);
        let acc =
            knn_classify_accuracy(&train.view(), &labels, &query.view(), &qlabels, 5).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn dtm_kl_zero_for_isometric_copy() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Array2::from_shape_fn((40, 2), |_| rng.gen_range(-2.0..2.0));
        // Rotate by 0.7 rad and translate.
        let (c, s) = (0.7f64.cos(), 0.7f64.sin());
        let mut z = Array2::zeros((40, 2));
        for i in 0..40 {
            z[[i, 0]] = c * x[[i, 0]] - s * x[[i, 1]] + 5.0;
            z[[i, 1]] = s * x[[i, 0]] + c * x[[i, 1] ] - 3.0;
        }
        for sigma in [0.01, 0.1, 1.0, 10.0] {
            let kl = dtm_kl(&x.view(), &z.view(), sigma).unwrap();
            assert!(kl.abs() < 1e-9, "sigma {sigma}: {kl}");
        }
    }

    #[test]
    fn dtm_kl_hand_case() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let z = array![[0.0, 0.0], [3.0, 0.0], [0.0, 1.0]];
        let sigma = 0.8;
        let got = dtm_kl(&x.view(), &z.view(), sigma).unwrap();

        let dens = |d01: f64, d02: f64, d12: f64| -> [f64; 3] {
            let s0 = 1.0 + (-d01 / sigma).exp() + (-d02 / sigma).exp();
            let s1 = (-d01 / sigma).exp() + 1.0 + (-d12 / sigma).exp();
            let s2 = (-d02 / sigma).exp() + (-d12 / sigma).exp() + 1.0;
            let t = s0 + s1 + s2;
            [s0 / t, s1 / t, s2 / t]
        };
        // Squared distances by hand.
        let fx = dens(1.0, 4.0, 5.0);
        let fz = dens(9.0, 1.0, 10.0);
        let want: f64 = (0..3).map(|i| fx[i] * (fx[i] / fz[i]).ln()).sum();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn dtm_kl_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..5 {
            let x = Array2::from_shape_fn((25, 2), |_| rng.gen_range(-1.0..1.0));
            let z = Array2::from_shape_fn((25, 2), |_| rng.gen_range(-1.0..1.0));
            let kl = dtm_kl(&x.view(), &z.view(), 0.5).unwrap();
            assert!(kl >= -1e-12, "trial {trial}: {kl}");
        }
    }

    #[test]
    fn correlation_one_for_positive_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_fn((30, 2), |_| rng.gen_range(-1.0..1.0));
        let z = x.mapv(|v| 2.5 * v + 1.0);
        let r = distance_correlation(&x.view(), &z.view()).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_negative_for_reversed_ranks() {
        // Four collinear points; the far input pair (0,3) is the closest
        // embedding pair and vice versa.
        let x = array![[0.0], [1.0], [2.0], [4.0]];
        let z = array![[0.0], [5.0], [3.0], [0.5]];
        let r = distance_correlation(&x.view(), &z.view()).unwrap();
        assert!(r < 0.0, "r = {r}");
    }

    #[test]
    fn correlation_zero_variance_is_error() {
        let x = array![[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
        let z = array![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(distance_correlation(&x.view(), &z.view()).is_err());
    }

    #[test]
    fn sampled_correlation_matches_exact_when_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((20, 2), |_| rng.gen_range(-1.0..1.0));
        let z = Array2::from_shape_fn((20, 2), |_| rng.gen_range(-1.0..1.0));
        let exact = distance_correlation(&x.view(), &z.view()).unwrap();
        let (sampled, used) =
            distance_correlation_sampled(&x.view(), &z.view(), 1_000_000, 1).unwrap();
        assert_eq!(used, 190);
        assert_eq!(exact, sampled);
    }

    #[test]
    fn trustworthiness_identity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = Array2::from_shape_fn((50, 2), |_| rng.gen_range(-1.0..1.0));
        let t = trustworthiness(&x.view(), &x.view(), 5).unwrap();
        assert_eq!(t, 1.0);
    }

    #[test]
    fn trustworthiness_matches_rank_oracle() {
        // Independent implementation: full rank matrices from scratch.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200;
        let x = Array2::from_shape_fn((n, 5), |_| rng.gen_range(-1.0..1.0));
        let z = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        let k = 7;
        let got = trustworthiness(&x.view(), &z.view(), k).unwrap();

        let dist = |m: &Array2<f64>, i: usize, j: usize| {
            m.row(i)
                .iter()
                .zip(m.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let mut penalty = 0.0;
        for i in 0..n {
            let mut x_order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            x_order.sort_by(|&a, &b| {
                dist(&x, i, a).total_cmp(&dist(&x, i, b)).then(a.cmp(&b))
            });
            let mut z_order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            z_order.sort_by(|&a, &b| {
                dist(&z, i, a).total_cmp(&dist(&z, i, b)).then(a.cmp(&b))
            });
            for &j in &z_order[..k] {
                let rank = x_order.iter().position(|&t| t == j).unwrap() + 1;
                if rank > k {
                    penalty += (rank - k) as f64;
                }
            }
        }
        let want =
            1.0 - 2.0 / (n as f64 * k as f64 * (2.0 * n as f64 - 3.0 * k as f64 - 1.0)) * penalty;
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn trustworthiness_frozen_reference_values() {
        // Closed-form dataset with independently computed reference values.
        let n = 120;
        let x = Array2::from_shape_fn((n, 4), |(i, j)| ((i * 7 + j * 3) as f64).sin());
        let z = Array2::from_shape_fn((n, 2), |(i, k)| ((i * 5 + k * 2) as f64).cos());
        let t5 = trustworthiness(&x.view(), &z.view(), 5).unwrap();
        let t11 = trustworthiness(&x.view(), &z.view(), 11).unwrap();
        assert!((t5 - 0.5235714285714286).abs() < 1e-12, "t5 = {t5}");
        assert!((t11 - 0.5198734922035892).abs() < 1e-12, "t11 = {t11}");
    }

    #[test]
    fn silhouette_far_tight_clusters_near_one() {
        let (z, labels) = two_clouds(15, 100.0, 12);
        let s = silhouette(&z.view(), &labels).unwrap();
        assert!(s > 0.95, "s = {s}");
    }

    #[test]
    fn silhouette_identical_points_is_zero() {
        let z = Array2::zeros((6, 2));
        let labels = vec![0, 0, 0, 1, 1, 1];
        assert_eq!(silhouette(&z.view(), &labels).unwrap(), 0.0);
    }

    #[test]
    fn silhouette_single_cluster_is_error() {
        let z = Array2::zeros((4, 2));
        assert!(silhouette(&z.view(), &[1, 1, 1, 1]).is_err());
    }

    #[test]
    fn silhouette_six_point_hand_case() {
        // Line: cluster 0 at {0,1,2}, cluster 1 at {10,11,13}.
        let z = array![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [10.0, 0.0], [11.0, 0.0], [13.0, 0.0]];
        let labels = vec![0, 0, 0, 1, 1, 1];
        let got = silhouette(&z.view(), &labels).unwrap();

        let s = |a: f64, b: f64| (b - a) / a.max(b);
        let want = (s(1.5, (10.0 + 11.0 + 13.0) / 3.0)
            + s(1.0, (9.0 + 10.0 + 12.0) / 3.0)
            + s(1.5, (8.0 + 9.0 + 11.0) / 3.0)
            + s(2.0, (10.0 + 9.0 + 8.0) / 3.0)
            + s(1.5, (11.0 + 10.0 + 9.0) / 3.0)
            + s(2.5, (13.0 + 12.0 + 11.0) / 3.0))
            / 6.0;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn metrics_invariant_to_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 60;
        let x = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0));
        let z = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<i64> = (0..n).map(|i| i64::from(i % 2 == 0)).collect();

        let (c, s) = (1.1f64.cos(), 1.1f64.sin());
        let mut zr = Array2::zeros((n, 2));
        for i in 0..n {
            zr[[i, 0]] = c * z[[i, 0]] - s * z[[i, 1]] + 7.0;
            zr[[i, 1]] = s * z[[i, 0]] + c * z[[i, 1]] - 2.0;
        }

        let acc0 = knn_accuracy(&z.view(), &labels, 5).unwrap();
        let acc1 = knn_accuracy(&zr.view(), &labels, 5).unwrap();
        assert_eq!(acc0, acc1);

        let t0 = trustworthiness(&x.view(), &z.view(), 6).unwrap();
        let t1 = trustworthiness(&x.view(), &zr.view(), 6).unwrap();
        assert!((t0 - t1).abs() < 1e-12);

        // Uniform scaling leaves the rank-based metrics alone too.
        let zs = z.mapv(|v| 4.0 * v);
        assert_eq!(knn_accuracy(&zs.view(), &labels, 5).unwrap(), acc0);
        assert!((trustworthiness(&x.view(), &zs.view(), 6).unwrap() - t0).abs() < 1e-12);
    }

    #[test]
    fn report_roundtrip_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        let mut r = MetricReport::default();
        r.push("trustworthiness", "K=5", 0.61);
        r.push("knn_accuracy", "K=10;labels=macro", 0.97);
        r.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("metric,param,value\n"));
        assert!(text.contains("trustworthiness,K=5,0.61"));
    }
}
