//! Locally adaptive global distance construction.
//!
//! Each point gets a local scale (the root-mean-square distance to its
//! neighbors). Neighbor edges are rescaled by the scale of the endpoint
//! whose view they represent, conflicting directed views are reconciled by
//! taking the larger finite one, and an all-pairs shortest-path search over
//! the reconciled graph yields a global distance that is infinite exactly
//! between different connected components.
//!
//! The resulting matrix is an extended metric (symmetric, zero diagonal,
//! triangle inequality over finite triples) and is invariant to a uniform
//! rescaling of the input coordinates, since the local scales absorb it.

pub mod oracle;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use ndarray::{Array2, Axis};
use ndarray::parallel::prelude::*;

use crate::data;
use crate::error::{Error, Result};
use crate::neighbors::KnnGraph;

/// Per-point local normalizing scales: `sigma[i]` is the root of the mean
/// squared distance from point `i` to its graph neighbors.
#[derive(Debug, Clone)]
pub struct LocalScales {
    pub sigma: Vec<f64>,
}

pub fn local_scales(g: &KnnGraph) -> LocalScales {
    let sigma = g
        .distances
        .iter()
        .map(|row| {
            debug_assert!(!row.is_empty());
            let mean_sq = row.iter().map(|d| d * d).sum::<f64>() / row.len() as f64;
            mean_sq.sqrt()
        })
        .collect();
    LocalScales { sigma }
}

/// Sparse symmetric graph of finite rescaled local distances.
#[derive(Debug, Clone)]
pub struct LocalDistanceGraph {
    n: usize,
    /// Sorted adjacency per node; both directions of every edge are present.
    adj: Vec<Vec<(u32, f64)>>,
}

impl LocalDistanceGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, i: usize) -> &[(u32, f64)] {
        &self.adj[i]
    }

    /// The stored weight of edge (i, j), if present.
    pub fn edge(&self, i: usize, j: usize) -> Option<f64> {
        self.adj[i]
            .binary_search_by(|&(c, _)| c.cmp(&(j as u32)))
            .ok()
            .map(|t| self.adj[i][t].1)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|r| r.len()).sum::<usize>() / 2
    }

    /// Build directly from an undirected edge list. Duplicate edges merge by
    /// taking the larger weight.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32, f64)>) -> Result<Self> {
        let mut pairs: Vec<(u32, u32, f64)> = Vec::new();
        for (i, j, w) in edges {
            if i == j || i as usize >= n || j as usize >= n {
                return Err(Error::invalid(format!("bad edge ({i},{j}) for n={n}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::invalid(format!("bad edge weight {w}")));
            }
            pairs.push((i.min(j), i.max(j), w));
        }
        Ok(Self::from_normalized_pairs(n, pairs))
    }

    /// `pairs` hold (lo, hi, w) with lo < hi; duplicates merge by max.
    fn from_normalized_pairs(n: usize, mut pairs: Vec<(u32, u32, f64)>) -> Self {
        pairs.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        let mut it = pairs.into_iter().peekable();
        while let Some((i, j, mut w)) = it.next() {
            while let Some(&(i2, j2, w2)) = it.peek() {
                if i2 == i && j2 == j {
                    w = w.max(w2);
                    it.next();
                } else {
                    break;
                }
            }
            adj[i as usize].push((j, w));
            adj[j as usize].push((i, w));
        }
        for row in &mut adj {
            row.sort_by_key(|&(c, _)| c);
        }
        LocalDistanceGraph { n, adj }
    }
}

/// Rescale each directed neighbor edge by its owner's local scale and merge
/// the two directed views of a pair by taking the larger finite one (a pair
/// seen from only one side keeps that side's value).
///
/// With both directions present this equals `|x_i - x_j| / min(s_i, s_j)`.
pub fn rescale_and_symmetrize(g: &KnnGraph, scales: &LocalScales) -> Result<LocalDistanceGraph> {
    let n = g.n();
    if scales.sigma.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: scales.sigma.len() });
    }
    let mut pairs: Vec<(u32, u32, f64)> = Vec::new();
    for i in 0..n {
        let si = scales.sigma[i];
        for (t, &j) in g.indices[i].iter().enumerate() {
            let len = g.distances[i][t];
            let w = if si > 0.0 {
                len / si
            } else if len == 0.0 {
                0.0
            } else {
                return Err(Error::ZeroScale { i, j: j as usize });
            };
            let (lo, hi) = (i.min(j as usize) as u32, i.max(j as usize) as u32);
            pairs.push((lo, hi, w));
        }
    }
    Ok(LocalDistanceGraph::from_normalized_pairs(n, pairs))
}

/// Symmetric all-pairs distance matrix with `f64::INFINITY` marking pairs in
/// different connected components.
#[derive(Debug, Clone)]
pub struct GlobalDistanceMatrix {
    d: Array2<f64>,
    components: Vec<u32>,
    /// Finite off-diagonal columns per row, kept only for truncated
    /// matrices so downstream membership construction can skip the holes.
    pattern: Option<Vec<Vec<u32>>>,
}

impl GlobalDistanceMatrix {
    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[[i, j]]
    }

    pub fn dense(&self) -> &Array2<f64> {
        &self.d
    }

    pub fn components(&self) -> &[u32] {
        &self.components
    }

    /// Finite off-diagonal pattern, present only after K-truncation.
    pub fn pattern(&self) -> Option<&Vec<Vec<u32>>> {
        self.pattern.as_ref()
    }

    /// Wrap a symmetric nonnegative matrix with zero diagonal, deriving
    /// connectivity from the finite entries.
    pub fn from_dense(d: Array2<f64>) -> Result<Self> {
        let n = d.nrows();
        if d.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: d.ncols() });
        }
        for i in 0..n {
            if d[[i, i]] != 0.0 {
                return Err(Error::invalid("distance matrix must have zero diagonal"));
            }
            for j in (i + 1)..n {
                let v = d[[i, j]];
                if v != d[[j, i]] {
                    return Err(Error::invalid("distance matrix must be symmetric"));
                }
                if v.is_nan() || v < 0.0 {
                    return Err(Error::invalid("distances must be nonnegative or infinite"));
                }
            }
        }
        let components = components_from_dense(&d);
        Ok(GlobalDistanceMatrix { d, components, pattern: None })
    }

    /// Cache the matrix on disk in the binary format of the data module,
    /// with infinities stored as NaN.
    pub fn save_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let mapped = self.d.mapv(|v| if v.is_infinite() { f64::NAN } else { v });
        data::write_matrix_bin(path, &mapped.view())
    }

    /// Load a matrix cached with [`GlobalDistanceMatrix::save_cache`].
    pub fn load_cache(path: impl AsRef<Path>) -> Result<Self> {
        let raw = data::read_matrix_bin(path)?;
        let mapped = raw.mapv(|v| if v.is_nan() { f64::INFINITY } else { v });
        Self::from_dense(mapped)
    }
}

fn components_from_dense(d: &Array2<f64>) -> Vec<u32> {
    let n = d.nrows();
    let mut comp = vec![u32::MAX; n];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != u32::MAX {
            continue;
        }
        comp[start] = next;
        stack.push(start);
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if comp[v] == u32::MAX && d[[u, v]].is_finite() {
                    comp[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    comp
}

struct HeapItem {
    dist: f64,
    node: u32,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so the std max-heap pops the smallest distance first.
        other.dist.total_cmp(&self.dist).then(other.node.cmp(&self.node))
    }
}

fn dijkstra_into(offsets: &[usize], cols: &[u32], weights: &[f64], src: usize, out: &mut [f64]) {
    out.fill(f64::INFINITY);
    out[src] = 0.0;
    let mut heap = BinaryHeap::with_capacity(64);
    heap.push(HeapItem { dist: 0.0, node: src as u32 });
    while let Some(HeapItem { dist, node }) = heap.pop() {
        let u = node as usize;
        if dist > out[u] {
            continue;
        }
        for e in offsets[u]..offsets[u + 1] {
            let v = cols[e] as usize;
            let nd = dist + weights[e];
            if nd < out[v] {
                out[v] = nd;
                heap.push(HeapItem { dist: nd, node: v as u32 });
            }
        }
    }
}

/// Shortest-path length between every pair of nodes (one binary-heap search
/// per source, sources run in parallel). Unreachable pairs are infinite.
/// The upper triangle is authoritative: the lower one is mirrored from it so
/// symmetry holds exactly.
pub fn shortest_paths(l: &LocalDistanceGraph) -> GlobalDistanceMatrix {
    let n = l.n();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    offsets.push(0);
    for row in &l.adj {
        for &(c, w) in row {
            cols.push(c);
            weights.push(w);
        }
        offsets.push(cols.len());
    }

    let mut d = Array2::zeros((n, n));
    d.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(src, mut row)| {
            dijkstra_into(&offsets, &cols, &weights, src, row.as_slice_mut().unwrap());
        });

    for i in 0..n {
        d[[i, i]] = 0.0;
        for j in (i + 1)..n {
            let v = d[[i, j]];
            d[[j, i]] = v;
        }
    }

    let components = components_from_graph(l);
    GlobalDistanceMatrix { d, components, pattern: None }
}

fn components_from_graph(l: &LocalDistanceGraph) -> Vec<u32> {
    let n = l.n();
    let mut comp = vec![u32::MAX; n];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != u32::MAX {
            continue;
        }
        comp[start] = next;
        stack.push(start);
        while let Some(u) = stack.pop() {
            for &(v, _) in &l.adj[u] {
                let v = v as usize;
                if comp[v] == u32::MAX {
                    comp[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Rescale all finite entries so their median (lower median over the finite
/// off-diagonal entries) becomes `target`. Infinities are preserved.
pub fn normalize_median(m: GlobalDistanceMatrix, target: f64) -> Result<GlobalDistanceMatrix> {
    assert!(target > 0.0, "target median must be positive");
    let n = m.n();
    let mut finite: Vec<f64> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = m.d[[i, j]];
            if v.is_finite() {
                finite.push(v);
            }
        }
    }
    if finite.is_empty() {
        return Err(Error::Metric("cannot normalize: all off-diagonal distances are infinite".into()));
    }
    let mid = (finite.len() - 1) / 2;
    let (_, median, _) = finite.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let scale = target / *median;
    let GlobalDistanceMatrix { mut d, components, pattern } = m;
    d.mapv_inplace(|v| if v.is_finite() { v * scale } else { v });
    Ok(GlobalDistanceMatrix { d, components, pattern })
}

/// Keep only the `k_tilde` smallest finite off-diagonal entries of each row
/// (ties broken by the smaller column id), then re-symmetrize the kept
/// pattern by union. Dropped entries become infinite, which downstream
/// membership construction reads as weight zero.
pub fn truncate_ktilde(m: &GlobalDistanceMatrix, k_tilde: usize) -> GlobalDistanceMatrix {
    let n = m.n();
    assert!(k_tilde >= 1 && k_tilde <= n - 1, "k_tilde must satisfy 1 <= k_tilde <= n-1");

    let mut keep: Vec<Vec<u32>> = vec![Vec::new(); n];
    for i in 0..n {
        let mut ord: Vec<(f64, u32)> = (0..n)
            .filter(|&j| j != i && m.d[[i, j]].is_finite())
            .map(|j| (m.d[[i, j]], j as u32))
            .collect();
        if ord.len() > k_tilde {
            ord.select_nth_unstable_by(k_tilde - 1, |a, b| a.partial_cmp(b).unwrap());
            ord.truncate(k_tilde);
        }
        for &(_, j) in &ord {
            keep[i].push(j);
        }
    }
    // Union symmetrization of the kept pattern.
    let mut sets: Vec<Vec<u32>> = vec![Vec::new(); n];
    for i in 0..n {
        for &j in &keep[i] {
            sets[i].push(j);
            sets[j as usize].push(i as u32);
        }
    }
    let mut d = Array2::from_elem((n, n), f64::INFINITY);
    let mut pattern = Vec::with_capacity(n);
    for i in 0..n {
        d[[i, i]] = 0.0;
        sets[i].sort_unstable();
        sets[i].dedup();
        for &j in &sets[i] {
            d[[i, j as usize]] = m.d[[i, j as usize]];
        }
        pattern.push(std::mem::take(&mut sets[i]));
    }
    GlobalDistanceMatrix { d, components: m.components.clone(), pattern: Some(pattern) }
}
