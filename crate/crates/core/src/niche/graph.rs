//! Proximity graphs over cell coordinates.

use std::collections::{BTreeSet, HashMap};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{GraphMethod, NicheConfig, NicheError};
use crate::hypercore::Hypergraph;

/// A coincident point moved off its twin before triangulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterRecord {
    pub cell: usize,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone)]
pub struct SpatialGraph {
    pub graph: Hypergraph,
    pub jitter: Vec<JitterRecord>,
}

/// Builds a 2-uniform hypergraph over the rows of an `n × 2` coordinate
/// matrix.
///
/// Delaunay mode links Delaunay-adjacent points, which is the same relation
/// as Voronoi-cell adjacency. kNN mode links `i` and `j` when either selects
/// the other among its `knn_k` nearest neighbours (ties broken by index).
pub fn build_spatial_graph(coords: ArrayView2<'_, f64>, cfg: &NicheConfig) -> Result<SpatialGraph, NicheError> {
    if coords.ncols() != 2 {
        return Err(NicheError::DimensionMismatch { what: "coordinate columns", expected: 2, got: coords.ncols() });
    }
    let points: Vec<[f64; 2]> = coords.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    if let Some(i) = points.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(NicheError::InvalidDataset(format!("cell {i} has a non-finite coordinate")));
    }
    match cfg.graph_method {
        GraphMethod::Delaunay => delaunay(points),
        GraphMethod::Knn => {
            let edges = knn_edges(&points, cfg.knn_k)?;
            let graph = Hypergraph::new(points.len(), edges.into_iter().map(|(a, b)| [a, b]))?;
            Ok(SpatialGraph { graph, jitter: Vec::new() })
        }
    }
}

fn delaunay(mut points: Vec<[f64; 2]>) -> Result<SpatialGraph, NicheError> {
    let n = points.len();
    if n < 3 {
        return Err(NicheError::TooFewPoints { n, min: 3 });
    }
    let jitter = separate_coincident(&mut points);
    let input: Vec<delaunator::Point> = points.iter().map(|p| delaunator::Point { x: p[0], y: p[1] }).collect();
    let tri = delaunator::triangulate(&input);
    if tri.triangles.is_empty() {
        return Err(NicheError::DegenerateGeometry("all points are collinear".into()));
    }
    let mut edges = BTreeSet::new();
    for t in tri.triangles.chunks_exact(3) {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let mut covered = vec![false; n];
    for &(a, b) in &edges {
        covered[a] = true;
        covered[b] = true;
    }
    if let Some(i) = covered.iter().position(|c| !c) {
        return Err(NicheError::DegenerateGeometry(format!("point {i} was dropped by the triangulation")));
    }
    let graph = Hypergraph::new(n, edges.into_iter().map(|(a, b)| [a, b]))?;
    Ok(SpatialGraph { graph, jitter })
}

/// Moves every repeat of an exactly coincident point by `1e-9` times the
/// bounding-box diagonal, in a direction that depends only on how many
/// earlier copies share its location.
fn separate_coincident(points: &mut [[f64; 2]]) -> Vec<JitterRecord> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points.iter() {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let diagonal = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt();
    let radius = if diagonal > 0.0 { 1e-9 * diagonal } else { 1e-9 };

    let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
    let mut records = Vec::new();
    for (cell, p) in points.iter_mut().enumerate() {
        let key = (p[0].to_bits(), p[1].to_bits());
        let copies = seen.entry(key).or_insert(0);
        if *copies > 0 {
            let angle = *copies as f64 * 2.399_963_229_728_653; // golden angle
            let (dx, dy) = (radius * angle.cos(), radius * angle.sin());
            p[0] += dx;
            p[1] += dy;
            records.push(JitterRecord { cell, dx, dy });
        }
        *copies += 1;
    }
    records
}

/// Symmetrized kNN edges, as sorted `(low, high)` pairs.
pub(crate) fn knn_edges(points: &[[f64; 2]], k: usize) -> Result<BTreeSet<(usize, usize)>, NicheError> {
    let n = points.len();
    if n < 2 {
        return Err(NicheError::TooFewPoints { n, min: 2 });
    }
    let k = k.min(n - 1);
    let grid = BucketGrid::new(points);
    let mut edges = BTreeSet::new();
    for i in 0..n {
        for j in grid.nearest(points, i, k) {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    Ok(edges)
}

/// Uniform bucket grid for exact nearest-neighbour queries in the plane.
struct BucketGrid {
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl BucketGrid {
    fn new(points: &[[f64; 2]]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        let per_side = (points.len() as f64).sqrt().ceil().max(1.0);
        let cell = span / per_side;
        let dims = [
            (((hi[0] - lo[0]) / cell).floor() as usize + 1).min(1 << 16),
            (((hi[1] - lo[1]) / cell).floor() as usize + 1).min(1 << 16),
        ];
        let mut grid = Self { origin: lo, cell, dims, buckets: vec![Vec::new(); dims[0] * dims[1]] };
        for (i, p) in points.iter().enumerate() {
            let (bx, by) = grid.bucket_of(p);
            grid.buckets[by * dims[0] + bx].push(i);
        }
        grid
    }

    fn bucket_of(&self, p: &[f64; 2]) -> (usize, usize) {
        let bx = (((p[0] - self.origin[0]) / self.cell).floor() as usize).min(self.dims[0] - 1);
        let by = (((p[1] - self.origin[1]) / self.cell).floor() as usize).min(self.dims[1] - 1);
        (bx, by)
    }

    /// The `k` nearest other points of `i`, ordered by (distance, index).
    fn nearest(&self, points: &[[f64; 2]], i: usize, k: usize) -> Vec<usize> {
        let p = points[i];
        let (bx, by) = self.bucket_of(&p);
        let mut found: Vec<(f64, usize)> = Vec::new();
        let max_ring = self.dims[0].max(self.dims[1]);
        for ring in 0..=max_ring {
            let (x0, x1) = (bx as isize - ring as isize, bx as isize + ring as isize);
            let (y0, y1) = (by as isize - ring as isize, by as isize + ring as isize);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let on_ring = x == x0 || x == x1 || y == y0 || y == y1;
                    if !on_ring || x < 0 || y < 0 || x as usize >= self.dims[0] || y as usize >= self.dims[1] {
                        continue;
                    }
                    for &j in &self.buckets[y as usize * self.dims[0] + x as usize] {
                        if j != i {
                            let d = (points[j][0] - p[0]).powi(2) + (points[j][1] - p[1]).powi(2);
                            found.push((d, j));
                        }
                    }
                }
            }
            if found.len() >= k {
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                // Anything outside the scanned square is at least `ring * cell` away.
                let reach = ring as f64 * self.cell;
                if found[k - 1].0 < reach * reach || ring == max_ring {
                    found.truncate(k);
                    return found.into_iter().map(|(_, j)| j).collect();
                }
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        found.truncate(k);
        found.into_iter().map(|(_, j)| j).collect()
    }
}
