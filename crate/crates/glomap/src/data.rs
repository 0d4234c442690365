//! Synthetic dataset generators and dataset/embedding file formats.
//!
//! All generators are pure functions of their arguments: the same [`Seed`]
//! yields a bit-identical dataset. Each call owns its own ChaCha stream, so
//! generators are safe to call concurrently.
//!
//! On disk a dataset is a UTF-8 CSV with a header row. Feature columns are
//! named `x0..x{p-1}`, integer label columns carry a `label:` prefix
//! (e.g. `label:macro`) and generating 2-D coordinates, when present, are
//! stored as `coord:0,coord:1`. A compact binary cache format for plain
//! matrices is also provided (magic `GLMX`, then `n`, `p` as little-endian
//! u64 and row-major little-endian f64 values).

use std::f64::consts::PI;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Seed for a generator's private random stream. Identical seeds produce
/// bit-identical datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seed(pub u64);

impl Seed {
    pub(crate) fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// One named integer labeling of the rows (datasets may carry several,
/// e.g. one per hierarchy level).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelColumn {
    pub name: String,
    pub values: Vec<i64>,
}

/// An n x p dataset with optional label columns and optional generating 2-D
/// coordinates (ground truth for the geometry metrics).
#[derive(Debug, Clone)]
pub struct DataMatrix {
    pub points: Array2<f64>,
    pub labels: Vec<LabelColumn>,
    pub coords2d: Option<Array2<f64>>,
}

impl DataMatrix {
    /// Validating constructor. Requires n >= 1, p >= 1, finite entries,
    /// label vectors of length n, and n x 2 coords when present.
    pub fn new(
        points: Array2<f64>,
        labels: Vec<LabelColumn>,
        coords2d: Option<Array2<f64>>,
    ) -> Result<Self> {
        let (n, p) = points.dim();
        if n == 0 || p == 0 {
            return Err(Error::invalid("data matrix must have n >= 1 and p >= 1"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("data matrix entries must be finite"));
        }
        for l in &labels {
            if l.values.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: l.values.len() });
            }
        }
        if let Some(c) = &coords2d {
            if c.nrows() != n {
                return Err(Error::DimensionMismatch { expected: n, got: c.nrows() });
            }
            if c.ncols() != 2 {
                return Err(Error::DimensionMismatch { expected: 2, got: c.ncols() });
            }
        }
        Ok(Self { points, labels, coords2d })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn p(&self) -> usize {
        self.points.ncols()
    }

    /// Label column by name.
    pub fn label(&self, name: &str) -> Option<&LabelColumn> {
        self.labels.iter().find(|l| l.name == name)
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// A point drawn uniformly from the unit sphere in `dim` dimensions.
fn unit_sphere(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// S-shaped curve extruded along a second axis: 3-D points
/// `(sin t, u, sin t * (cos t - 1))` for `t ~ U(-3pi/2, 3pi/2)` and
/// `u ~ U(0, 2)`. The generating `(t, u)` pair is kept as `coords2d` and a
/// 10-way quantization of `t` is attached as the label `segment`.
pub fn gen_scurve(n: usize, seed: Seed) -> DataMatrix {
    assert!(n >= 1, "n must be >= 1");
    let mut rng = seed.rng();
    let (lo, hi) = (-1.5 * PI, 1.5 * PI);
    let t: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();

    let mut points = Array2::zeros((n, 3));
    let mut coords = Array2::zeros((n, 2));
    let mut segment = Vec::with_capacity(n);
    for i in 0..n {
        points[[i, 0]] = t[i].sin();
        points[[i, 1]] = u[i];
        points[[i, 2]] = t[i].sin() * (t[i].cos() - 1.0);
        coords[[i, 0]] = t[i];
        coords[[i, 1]] = u[i];
        let bin = (((t[i] - lo) / (hi - lo)) * 10.0).floor() as i64;
        segment.push(bin.clamp(0, 9));
    }
    DataMatrix {
        points,
        labels: vec![LabelColumn { name: "segment".into(), values: segment }],
        coords2d: Some(coords),
    }
}

/// Unit sphere with a polar cap cut away: candidates
/// `(sin t cos u, sin t sin u, cos t)` with `u ~ U(-0.55, 2pi - 0.55)`,
/// `t ~ U(0, 2pi)`, kept while `pi/8 < t < 7pi/8`, resampling until `n`
/// points survive. `coords2d` holds the generating `(t, u)`.
pub fn gen_severed_sphere(n: usize, seed: Seed) -> DataMatrix {
    assert!(n >= 1, "n must be >= 1");
    let mut rng = seed.rng();
    let mut points = Array2::zeros((n, 3));
    let mut coords = Array2::zeros((n, 2));
    let mut kept = 0;
    while kept < n {
        let u = rng.gen_range(-0.55..2.0 * PI - 0.55);
        let t = rng.gen_range(0.0..2.0 * PI);
        if t <= PI / 8.0 || t >= 7.0 * PI / 8.0 {
            continue;
        }
        points[[kept, 0]] = t.sin() * u.cos();
        points[[kept, 1]] = t.sin() * u.sin();
        points[[kept, 2]] = t.cos();
        coords[[kept, 0]] = t;
        coords[[kept, 1]] = u;
        kept += 1;
    }
    DataMatrix { points, labels: vec![], coords2d: Some(coords) }
}

/// Removal disk centers for the eggs surface.
const EGG_CENTERS: [(f64, f64); 12] = [
    (-13.0, -2.0),
    (-13.0, 2.0),
    (-8.0, -2.0),
    (-3.0, 2.0),
    (2.0, 2.0),
    (7.0, -2.0),
    (12.0, 2.0),
    (-8.0, 2.0),
    (-3.0, -2.0),
    (2.0, -2.0),
    (7.0, 2.0),
    (12.0, -2.0),
];

// 12 * 348 dome points plus the flat remainder gives the 5982-point total;
// the flat count is what survives of 2130 uniform rectangle draws after the
// removal disks are cut out.
const EGG_FLAT_POINTS: usize = 1806;
const EGG_DOME_POINTS: usize = 348;

/// A flat rectangle `[-16,16] x [-4,4]` with 12 unit disks cut out and a
/// unit half-sphere ("egg") rising from each hole: 1266 flat points plus
/// 12 x 348 dome points, 5982 points in total.
///
/// `coords2d` flattens the surface: the plane keeps its own coordinates and
/// each dome is unrolled by an azimuthal equidistant projection about its
/// apex (planar radius = arc length from the apex).
pub fn gen_eggs(seed: Seed) -> DataMatrix {
    let mut rng = seed.rng();
    let n = EGG_FLAT_POINTS + 12 * EGG_DOME_POINTS;
    let mut points = Array2::zeros((n, 3));
    let mut coords = Array2::zeros((n, 2));

    // Flat region: uniform on the rectangle, rejecting draws that land in a
    // removal disk, until the fixed flat-point count is reached.
    let mut kept = 0;
    while kept < EGG_FLAT_POINTS {
        let x = rng.gen_range(-16.0..16.0);
        let y = rng.gen_range(-4.0..4.0);
        let in_hole = EGG_CENTERS
            .iter()
            .any(|&(cx, cy)| (x - cx) * (x - cx) + (y - cy) * (y - cy) < 1.0);
        if in_hole {
            continue;
        }
        points[[kept, 0]] = x;
        points[[kept, 1]] = y;
        coords[[kept, 0]] = x;
        coords[[kept, 1]] = y;
        kept += 1;
    }

    // Domes: uniform on the unit upper half-sphere above each removal disk.
    let mut row = EGG_FLAT_POINTS;
    for &(cx, cy) in &EGG_CENTERS {
        for _ in 0..EGG_DOME_POINTS {
            let mut v = unit_sphere(&mut rng, 3);
            v[2] = v[2].abs();
            points[[row, 0]] = cx + v[0];
            points[[row, 1]] = cy + v[1];
            points[[row, 2]] = v[2];

            let r_xy = (v[0] * v[0] + v[1] * v[1]).sqrt();
            let arc = v[2].clamp(-1.0, 1.0).acos();
            if r_xy > 1e-12 {
                coords[[row, 0]] = cx + arc * v[0] / r_xy;
                coords[[row, 1]] = cy + arc * v[1] / r_xy;
            } else {
                coords[[row, 0]] = cx;
                coords[[row, 1]] = cy;
            }
            row += 1;
        }
    }
    DataMatrix { points, labels: vec![], coords2d: Some(coords) }
}

/// Three-level Gaussian cluster tree in 50 dimensions: 5 macro centers
/// (sd 100 per coordinate), 5 meso centers per macro (variance 1000),
/// 5 micro centers per meso (variance 100), and `points_per_micro` points
/// per micro center (variance 10). Labels `macro`, `meso`, `micro` give the
/// global cluster id at each level.
pub fn gen_hierarchical(points_per_micro: usize, seed: Seed) -> DataMatrix {
    assert!(points_per_micro >= 1, "points_per_micro must be >= 1");
    const P: usize = 50;
    let mut rng = seed.rng();
    let n = 125 * points_per_micro;
    let mut points = Array2::zeros((n, P));
    let mut lab_macro = Vec::with_capacity(n);
    let mut lab_meso = Vec::with_capacity(n);
    let mut lab_micro = Vec::with_capacity(n);

    let gauss_around = |rng: &mut ChaCha8Rng, center: &[f64], sd: f64| -> Vec<f64> {
        center.iter().map(|c| c + sd * standard_normal(rng)).collect()
    };

    let origin = vec![0.0; P];
    let mut row = 0;
    for i in 0..5 {
        let macro_c = gauss_around(&mut rng, &origin, 100.0);
        for j in 0..5 {
            let meso_c = gauss_around(&mut rng, &macro_c, 1000f64.sqrt());
            for k in 0..5 {
                let micro_c = gauss_around(&mut rng, &meso_c, 10.0);
                for _ in 0..points_per_micro {
                    let x = gauss_around(&mut rng, &micro_c, 10f64.sqrt());
                    points.row_mut(row).iter_mut().zip(&x).for_each(|(o, v)| *o = *v);
                    lab_macro.push(i as i64);
                    lab_meso.push((i * 5 + j) as i64);
                    lab_micro.push(((i * 5 + j) * 5 + k) as i64);
                    row += 1;
                }
            }
        }
    }
    DataMatrix {
        points,
        labels: vec![
            LabelColumn { name: "macro".into(), values: lab_macro },
            LabelColumn { name: "meso".into(), values: lab_meso },
            LabelColumn { name: "micro".into(), values: lab_micro },
        ],
        coords2d: None,
    }
}

/// Ten unit spheres near the origin of R^101 (centers drawn with
/// per-coordinate variance 0.5), each carrying 5% of the points, enclosed by
/// a radius-25 sphere carrying the remaining 50%. Labels: cluster id 0..9
/// for the inner spheres, 10 for the outer shell. `n` must be divisible
/// by 20.
pub fn gen_spheres(n: usize, seed: Seed) -> Result<DataMatrix> {
    gen_spheres_with_centers(n, seed).map(|(m, _)| m)
}

pub(crate) fn gen_spheres_with_centers(
    n: usize,
    seed: Seed,
) -> Result<(DataMatrix, Vec<Vec<f64>>)> {
    if n == 0 || n % 20 != 0 {
        return Err(Error::invalid(format!("spheres dataset needs n divisible by 20, got {n}")));
    }
    const P: usize = 101;
    let mut rng = seed.rng();
    let per_inner = n / 20;
    let outer = n / 2;

    let centers: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..P).map(|_| 0.5f64.sqrt() * standard_normal(&mut rng)).collect())
        .collect();

    let mut points = Array2::zeros((n, P));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_inner {
            let v = unit_sphere(&mut rng, P);
            for (t, (cv, vv)) in center.iter().zip(&v).enumerate() {
                points[[row, t]] = cv + vv;
            }
            labels.push(c as i64);
            row += 1;
        }
    }
    for _ in 0..outer {
        let v = unit_sphere(&mut rng, P);
        for (t, vv) in v.iter().enumerate() {
            points[[row, t]] = 25.0 * vv;
        }
        labels.push(10);
        row += 1;
    }
    let m = DataMatrix {
        points,
        labels: vec![LabelColumn { name: "cluster".into(), values: labels }],
        coords2d: None,
    };
    Ok((m, centers))
}

// ---------------------------------------------------------------------------
// CSV format
// ---------------------------------------------------------------------------

/// Write a dataset as CSV (features, then labels, then coords columns).
/// Values use the shortest representation that round-trips exactly.
pub fn save_matrix(path: impl AsRef<Path>, m: &DataMatrix) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);

    let mut header: Vec<String> = (0..m.p()).map(|j| format!("x{j}")).collect();
    for l in &m.labels {
        header.push(format!("label:{}", l.name));
    }
    if m.coords2d.is_some() {
        header.push("coord:0".into());
        header.push("coord:1".into());
    }
    writeln!(w, "{}", header.join(","))?;

    let mut line = String::new();
    for i in 0..m.n() {
        line.clear();
        for j in 0..m.p() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{}", m.points[[i, j]]));
        }
        for l in &m.labels {
            line.push_str(&format!(",{}", l.values[i]));
        }
        if let Some(c) = &m.coords2d {
            line.push_str(&format!(",{},{}", c[[i, 0]], c[[i, 1]]));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Write an embedding (plain matrix, no labels or coords) as CSV.
pub fn save_embedding(path: impl AsRef<Path>, z: &ArrayView2<f64>) -> Result<()> {
    let m = DataMatrix { points: z.to_owned(), labels: vec![], coords2d: None };
    save_matrix(path, &m)
}

/// Read a dataset CSV written by [`save_matrix`] (or by hand, following the
/// same header conventions). Malformed rows are reported with their 1-based
/// data row index.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));

    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("cannot read CSV header: {e}")))?
        .clone();

    let mut feature_cols = Vec::new();
    let mut label_cols: Vec<(usize, String)> = Vec::new();
    let mut coord_cols: Vec<(usize, String)> = Vec::new();
    for (idx, name) in headers.iter().enumerate() {
        if let Some(rest) = name.strip_prefix("label:") {
            label_cols.push((idx, rest.to_string()));
        } else if let Some(rest) = name.strip_prefix("coord:") {
            coord_cols.push((idx, rest.to_string()));
        } else {
            feature_cols.push(idx);
        }
    }
    if feature_cols.is_empty() {
        return Err(Error::Format("CSV has no feature columns".into()));
    }
    if !(coord_cols.is_empty() || coord_cols.len() == 2) {
        return Err(Error::Format(format!(
            "expected exactly 2 coord: columns, found {}",
            coord_cols.len()
        )));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut label_vals: Vec<Vec<i64>> = vec![Vec::new(); label_cols.len()];
    let mut coord_vals: Vec<[f64; 2]> = Vec::new();

    for (rec_idx, record) in reader.records().enumerate() {
        let row_no = rec_idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row: row_no,
            message: format!("{e}"),
        })?;
        let mut feats = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let cell = &record[c];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row_no,
                message: format!("non-numeric cell {:?} in column {:?}", cell, &headers[c]),
            })?;
            feats.push(v);
        }
        rows.push(feats);
        for (slot, &(c, _)) in label_vals.iter_mut().zip(&label_cols) {
            let cell = &record[c];
            let v: i64 = cell.parse().map_err(|_| Error::Parse {
                row: row_no,
                message: format!("non-integer label {:?} in column {:?}", cell, &headers[c]),
            })?;
            slot.push(v);
        }
        if coord_cols.len() == 2 {
            let mut cv = [0.0f64; 2];
            for (t, &(c, _)) in coord_cols.iter().enumerate() {
                let cell = &record[c];
                cv[t] = cell.parse().map_err(|_| Error::Parse {
                    row: row_no,
                    message: format!("non-numeric coord {:?} in column {:?}", cell, &headers[c]),
                })?;
            }
            coord_vals.push(cv);
        }
    }

    let n = rows.len();
    if n == 0 {
        return Err(Error::Format("CSV has no data rows".into()));
    }
    let p = feature_cols.len();
    let mut points = Array2::zeros((n, p));
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            points[[i, j]] = *v;
        }
    }
    let labels = label_cols
        .into_iter()
        .zip(label_vals)
        .map(|((_, name), values)| LabelColumn { name, values })
        .collect();
    let coords2d = if coord_vals.is_empty() {
        None
    } else {
        let mut c = Array2::zeros((n, 2));
        for (i, cv) in coord_vals.iter().enumerate() {
            c[[i, 0]] = cv[0];
            c[[i, 1]] = cv[1];
        }
        Some(c)
    };
    DataMatrix::new(points, labels, coords2d)
}

// ---------------------------------------------------------------------------
// Binary matrix cache
// ---------------------------------------------------------------------------

const GLMX_MAGIC: &[u8; 4] = b"GLMX";

/// Write a plain matrix in the binary cache format. Non-finite entries are
/// written verbatim; callers that need an infinity marker on disk should map
/// it to NaN first (see the distance-matrix cache).
pub fn write_matrix_bin(path: impl AsRef<Path>, m: &ArrayView2<f64>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(GLMX_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a matrix written by [`write_matrix_bin`].
pub fn read_matrix_bin(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != GLMX_MAGIC {
        return Err(Error::Format("bad magic; not a GLMX matrix file".into()));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let n = u64::from_le_bytes(buf8) as usize;
    r.read_exact(&mut buf8)?;
    let p = u64::from_le_bytes(buf8) as usize;
    let mut out = Array2::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            r.read_exact(&mut buf8)?;
            out[[i, j]] = f64::from_le_bytes(buf8);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scurve_shape_and_formula() {
        let m = gen_scurve(6000, Seed(1));
        assert_eq!(m.points.dim(), (6000, 3));
        let c = m.coords2d.as_ref().unwrap();
        for i in 0..m.n() {
            let (t, u) = (c[[i, 0]], c[[i, 1]]);
            // Recomputed libm calls can differ by an ulp across call sites.
            assert!((m.points[[i, 0]] - t.sin()).abs() < 1e-14);
            assert_eq!(m.points[[i, 1]], u);
            assert!((m.points[[i, 2]] - t.sin() * (t.cos() - 1.0)).abs() < 1e-14);
            assert!((-1.5 * PI..1.5 * PI).contains(&t));
            assert!((0.0..2.0).contains(&u));
        }
    }

    #[test]
    fn scurve_origin_point() {
        // t = 0, u = 1 maps to (0, 1, 0).
        let (t, u) = (0.0f64, 1.0f64);
        assert_eq!((t.sin(), u, t.sin() * (t.cos() - 1.0)), (0.0, 1.0, 0.0));
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_scurve(100, Seed(7));
        let b = gen_scurve(100, Seed(7));
        assert_eq!(a.points, b.points);
        assert_eq!(a.coords2d, b.coords2d);

        let a = gen_severed_sphere(500, Seed(3));
        let b = gen_severed_sphere(500, Seed(3));
        assert_eq!(a.points, b.points);

        let a = gen_hierarchical(2, Seed(9));
        let b = gen_hierarchical(2, Seed(9));
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn severed_sphere_selection_and_norm() {
        let m = gen_severed_sphere(500, Seed(11));
        let c = m.coords2d.as_ref().unwrap();
        for i in 0..m.n() {
            let t = c[[i, 0]];
            assert!(t > PI / 8.0 && t < 7.0 * PI / 8.0);
            let norm2: f64 = m.points.row(i).iter().map(|v| v * v).sum();
            assert!((norm2.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn eggs_counts_and_geometry() {
        let m = gen_eggs(Seed(5));
        assert_eq!(m.n(), 5982);
        assert_eq!(12 * EGG_DOME_POINTS + EGG_FLAT_POINTS, 5982);

        // Flat points avoid every removal disk and sit on the rectangle.
        for i in 0..EGG_FLAT_POINTS {
            let (x, y, z) = (m.points[[i, 0]], m.points[[i, 1]], m.points[[i, 2]]);
            assert_eq!(z, 0.0);
            assert!((-16.0..=16.0).contains(&x) && (-4.0..=4.0).contains(&y));
            for &(cx, cy) in &EGG_CENTERS {
                assert!((x - cx) * (x - cx) + (y - cy) * (y - cy) >= 1.0);
            }
        }
        // Dome points sit on a unit half-sphere above their center.
        for (d, &(cx, cy)) in EGG_CENTERS.iter().enumerate() {
            for r in 0..EGG_DOME_POINTS {
                let i = EGG_FLAT_POINTS + d * EGG_DOME_POINTS + r;
                let dx = m.points[[i, 0]] - cx;
                let dy = m.points[[i, 1]] - cy;
                let dz = m.points[[i, 2]];
                assert!(dz >= 0.0);
                assert!((dx * dx + dy * dy + dz * dz - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn hierarchical_shape_and_label_counts() {
        let m = gen_hierarchical(48, Seed(1));
        assert_eq!(m.points.dim(), (6000, 50));
        let distinct = |name: &str| {
            let mut v = m.label(name).unwrap().values.clone();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        assert_eq!(distinct("macro"), 5);
        assert_eq!(distinct("meso"), 25);
        assert_eq!(distinct("micro"), 125);
    }

    #[test]
    fn spheres_counts_and_radii() {
        let (m, centers) = gen_spheres_with_centers(10000, Seed(2)).unwrap();
        assert_eq!(m.points.dim(), (10000, 101));
        let labels = &m.labels[0].values;
        for c in 0..10 {
            assert_eq!(labels.iter().filter(|&&l| l == c).count(), 500);
        }
        assert_eq!(labels.iter().filter(|&&l| l == 10).count(), 5000);

        for i in 0..m.n() {
            let l = labels[i] as usize;
            if l == 10 {
                let norm2: f64 = m.points.row(i).iter().map(|v| v * v).sum();
                assert!((norm2.sqrt() - 25.0).abs() < 1e-9);
            } else {
                let d2: f64 = m
                    .points
                    .row(i)
                    .iter()
                    .zip(&centers[l])
                    .map(|(v, c)| (v - c) * (v - c))
                    .sum();
                assert!((d2.sqrt() - 1.0).abs() < 1e-9);
            }
        }
        assert!(gen_spheres(10001, Seed(2)).is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DataMatrix::new(
            ndarray::array![[1.5, -2.25], [1e-17, 3.0], [0.1, 2.0 / 3.0]],
            vec![LabelColumn { name: "c".into(), values: vec![0, 1, 1] }],
            Some(ndarray::array![[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]]),
        )
        .unwrap();
        save_matrix(&path, &m).unwrap();
        let back = load_matrix(&path).unwrap();
        assert_eq!(back.points, m.points);
        assert_eq!(back.labels, m.labels);
        assert_eq!(back.coords2d, m.coords2d);
    }

    #[test]
    fn csv_header_prefixes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        std::fs::write(&path, "x0,x1,label:macro\n0.5,1.5,3\n2.5,3.5,4\n").unwrap();
        let m = load_matrix(&path).unwrap();
        assert_eq!(m.p(), 2);
        assert_eq!(m.labels.len(), 1);
        assert_eq!(m.labels[0].name, "macro");
        assert_eq!(m.labels[0].values, vec![3, 4]);
    }

    #[test]
    fn csv_ragged_row_names_offender() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x0,x1\n1.0,2.0\n3.0\n").unwrap();
        match load_matrix(&path) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error with row index, got {other:?}"),
        }
    }

    #[test]
    fn csv_non_numeric_cell_names_offender() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad2.csv");
        std::fs::write(&path, "x0,x1\n1.0,2.0\n3.0,oops\n").unwrap();
        match load_matrix(&path) {
            Err(Error::Parse { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("oops"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn binary_roundtrip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.glmx");
        let m = ndarray::array![[1.0, f64::NAN], [1e300, -0.0]];
        write_matrix_bin(&path, &m.view()).unwrap();
        let back = read_matrix_bin(&path).unwrap();
        assert_eq!(back.dim(), (2, 2));
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
