//! Exact pairwise distances and the K-nearest-neighbor graph.
//!
//! Everything here is brute force on purpose: the pipeline targets datasets
//! up to a few tens of thousands of points and the downstream distance
//! construction assumes exact neighbors. Ties in distance are broken by the
//! smaller index so results are deterministic.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// K-nearest-neighbor lists with their Euclidean distances, row-wise
/// nondecreasing. Rows produced by [`knn_graph`] all have length K; rows of
/// a [`KnnGraph::symmetrized`] graph may be longer.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    /// Neighbor ids per point, sorted by (distance, id). Never contains the
    /// point itself.
    pub indices: Vec<Vec<u32>>,
    /// Distances aligned with `indices`.
    pub distances: Vec<Vec<f64>>,
}

impl KnnGraph {
    pub fn n(&self) -> usize {
        self.indices.len()
    }

    /// Mutual-neighborhood closure: adds the reverse of every directed edge,
    /// so `j` appears in row `i` iff `i` appears in row `j`. Rows stay
    /// sorted by (distance, id).
    pub fn symmetrized(&self) -> KnnGraph {
        let n = self.n();
        let mut sets: Vec<Vec<(f64, u32)>> = vec![Vec::new(); n];
        for i in 0..n {
            for (t, &j) in self.indices[i].iter().enumerate() {
                let d = self.distances[i][t];
                sets[i].push((d, j));
                sets[j as usize].push((d, i as u32));
            }
        }
        let mut indices = Vec::with_capacity(n);
        let mut distances = Vec::with_capacity(n);
        for mut row in sets {
            row.sort_by(|a, b| a.partial_cmp(b).unwrap());
            row.dedup_by(|a, b| a.1 == b.1 && a.0 == b.0);
            indices.push(row.iter().map(|&(_, j)| j).collect());
            distances.push(row.iter().map(|&(d, _)| d).collect());
        }
        KnnGraph { indices, distances }
    }
}

/// Full symmetric Euclidean distance matrix with zero diagonal.
pub fn pairwise_l2(points: &ArrayView2<f64>) -> Array2<f64> {
    let n = points.nrows();
    assert!(n >= 2, "need at least two points");
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = points.row(i);
            (0..n)
                .map(|j| {
                    if i == j {
                        return 0.0;
                    }
                    let xj = points.row(j);
                    xi.iter()
                        .zip(xj.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect();
    let mut d = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            d[[i, j]] = v;
        }
    }
    // Make symmetry exact: the two accumulation orders of a pair agree up to
    // rounding, so the upper triangle is authoritative.
    for i in 0..n {
        for j in (i + 1)..n {
            d[[j, i]] = d[[i, j]];
        }
    }
    d
}

/// The K smallest off-diagonal entries of each row of a distance matrix,
/// with ties broken by the smaller column id.
pub fn knn_graph(d2: &ArrayView2<f64>, k: usize) -> Result<KnnGraph> {
    let n = d2.nrows();
    if d2.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: d2.ncols() });
    }
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("K must satisfy 1 <= K <= n-1, got K={k}, n={n}")));
    }
    let rows: Vec<(Vec<u32>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut ord: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (d2[[i, j]], j as u32))
                .collect();
            ord.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
            ord.truncate(k);
            ord.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (ord.iter().map(|&(_, j)| j).collect(), ord.iter().map(|&(d, _)| d).collect())
        })
        .collect();
    let (indices, distances) = rows.into_iter().unzip();
    Ok(KnnGraph { indices, distances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_scurve, Seed};
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    #[test]
    fn three_four_five() {
        let x = array![[0.0, 0.0], [3.0, 4.0]];
        let d = pairwise_l2(&x.view());
        assert_eq!(d[[0, 1]], 5.0);
        assert_eq!(d[[1, 0]], 5.0);
        assert_eq!(d[[0, 0]], 0.0);
        assert_eq!(d[[1, 1]], 0.0);
    }

    #[test]
    fn matches_naive_recomputation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let x = Array2::from_shape_fn((10, 4), |_| rng.gen_range(-1.0..1.0));
        let d = pairwise_l2(&x.view());
        for i in 0..10 {
            for j in 0..10 {
                let mut s = 0.0;
                for t in 0..4 {
                    s += (x[[i, t]] - x[[j, t]]).powi(2);
                }
                assert!((d[[i, j]] - s.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn collinear_neighbors() {
        let x = array![[0.0], [1.0], [3.0]];
        let d = pairwise_l2(&x.view());
        let g = knn_graph(&d.view(), 1).unwrap();
        assert_eq!(g.indices, vec![vec![1], vec![0], vec![1]]);
        assert_eq!(g.distances[2], vec![2.0]);
    }

    #[test]
    fn matches_full_sort_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x = Array2::from_shape_fn((30, 3), |_| rng.gen_range(-2.0..2.0));
        let d = pairwise_l2(&x.view());
        let g = knn_graph(&d.view(), 5).unwrap();
        for i in 0..30 {
            let mut ord: Vec<(f64, u32)> =
                (0..30).filter(|&j| j != i).map(|j| (d[[i, j]], j as u32)).collect();
            ord.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let want: Vec<u32> = ord[..5].iter().map(|&(_, j)| j).collect();
            assert_eq!(g.indices[i], want, "row {i}");
        }
    }

    #[test]
    fn rejects_bad_k() {
        let d = pairwise_l2(&array![[0.0], [1.0], [2.0]].view());
        assert!(knn_graph(&d.view(), 3).is_err());
        assert!(knn_graph(&d.view(), 0).is_err());
    }

    #[test]
    fn rows_are_sorted_distinct_and_self_free() {
        let m = gen_scurve(200, Seed(3));
        let d = pairwise_l2(&m.points.view());
        let g = knn_graph(&d.view(), 15).unwrap();
        for i in 0..g.n() {
            assert_eq!(g.indices[i].len(), 15);
            let mut seen = std::collections::HashSet::new();
            for (t, &j) in g.indices[i].iter().enumerate() {
                assert_ne!(j as usize, i);
                assert!(seen.insert(j));
                assert!(g.distances[i][t].is_finite() && g.distances[i][t] >= 0.0);
                if t > 0 {
                    assert!(g.distances[i][t] >= g.distances[i][t - 1]);
                }
            }
        }
    }

    #[test]
    fn kth_distance_monotone_in_k() {
        let m = gen_scurve(120, Seed(5));
        let d = pairwise_l2(&m.points.view());
        let g5 = knn_graph(&d.view(), 5).unwrap();
        let g6 = knn_graph(&d.view(), 6).unwrap();
        for i in 0..g5.n() {
            assert!(g5.distances[i][4] <= g6.distances[i][5]);
        }
    }

    #[test]
    fn duplicate_points_are_legal_neighbors() {
        let x = array![[1.0, 1.0], [1.0, 1.0], [5.0, 5.0]];
        let d = pairwise_l2(&x.view());
        let g = knn_graph(&d.view(), 1).unwrap();
        assert_eq!(g.indices[0], vec![1]);
        assert_eq!(g.distances[0], vec![0.0]);
    }

    #[test]
    fn symmetrized_rows_are_mutual() {
        let m = gen_scurve(80, Seed(9));
        let d = pairwise_l2(&m.points.view());
        let g = knn_graph(&d.view(), 4).unwrap().symmetrized();
        for i in 0..g.n() {
            for &j in &g.indices[i] {
                assert!(g.indices[j as usize].contains(&(i as u32)));
            }
        }
    }
}
