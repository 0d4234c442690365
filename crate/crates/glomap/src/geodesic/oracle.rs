//! Brute-force reference for the global distance, built the long way round:
//! one star-shaped local metric space per point, merged with a finite-max
//! operator, then cubic all-pairs shortest paths over the merged matrix.
//!
//! Under mutual neighborhoods (`j` in row `i` iff `i` in row `j`) this must
//! reproduce the production pipeline entrywise; the test suites hold the two
//! routes against each other. Intended for verification only: the size cap
//! keeps the O(n^3) cost trivial.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geodesic::LocalScales;
use crate::neighbors::KnnGraph;

const MAX_ORACLE_N: usize = 64;

/// Merged-local-metric distance computed by brute force.
///
/// Requires symmetric neighborhoods and `n <= 64`.
pub fn coequalizer_distance(g: &KnnGraph, scales: &LocalScales) -> Result<Array2<f64>> {
    let n = g.n();
    if n > MAX_ORACLE_N {
        return Err(Error::invalid(format!("oracle is capped at n <= {MAX_ORACLE_N}, got {n}")));
    }
    if scales.sigma.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: scales.sigma.len() });
    }
    for i in 0..n {
        for &j in &g.indices[i] {
            if !g.indices[j as usize].contains(&(i as u32)) {
                return Err(Error::invalid(format!(
                    "asymmetric neighborhood: {j} is a neighbor of {i} but not conversely"
                )));
            }
        }
    }

    // One local metric space per center: finite only on the diagonal and on
    // pairs (center, neighbor), where it is the rescaled edge length.
    let islands: Vec<Array2<f64>> = (0..n)
        .map(|a| {
            let mut m = Array2::from_elem((n, n), f64::INFINITY);
            for i in 0..n {
                m[[i, i]] = 0.0;
            }
            let sa = scales.sigma[a];
            for (t, &j) in g.indices[a].iter().enumerate() {
                let len = g.distances[a][t];
                let w = if sa > 0.0 {
                    len / sa
                } else if len == 0.0 {
                    0.0
                } else {
                    return Err(Error::ZeroScale { i: a, j: j as usize });
                };
                m[[a, j as usize]] = w;
                m[[j as usize, a]] = w;
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;

    // fmax merge: the largest finite local view of each pair, infinity when
    // no view is finite.
    let mut merged = Array2::from_elem((n, n), f64::INFINITY);
    for i in 0..n {
        merged[[i, i]] = 0.0;
    }
    for island in &islands {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let v = island[[i, j]];
                if v.is_finite() {
                    let cur = merged[[i, j]];
                    merged[[i, j]] = if cur.is_finite() { cur.max(v) } else { v };
                }
            }
        }
    }

    // Cubic shortest paths over the merged matrix, relaxed to a fixpoint so
    // the triangle inequality holds exactly under float arithmetic.
    loop {
        let mut changed = false;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let alt = merged[[i, k]] + merged[[k, j]];
                    if alt < merged[[i, j]] {
                        merged[[i, j]] = alt;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(merged)
}
