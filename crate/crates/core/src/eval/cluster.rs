//! Spectral clustering of embedding rows.
//!
//! 1. cosine-similarity kNN graph, symmetrized as `W = ½(A + Aᵀ)`
//! 2. bottom-k eigenvectors of `I − D^{-1/2} W D^{-1/2}`, i.e. the top-k of
//!    `M = D^{-1/2} W D^{-1/2}`
//! 3. row-normalize the eigenvector matrix
//! 4. k-means with farthest-point seeding, best inertia over restarts
//!
//! Small inputs use a dense eigensolver. Larger ones use a randomized block
//! Krylov subspace with Rayleigh–Ritz extraction; the block is wider than
//! `k`, so repeated eigenvalues (disconnected kNN components) are resolved.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::linalg;

const DENSE_LIMIT: usize = 1200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub n_clusters: usize,
    pub n_neighbors: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { n_clusters: 2, n_neighbors: 15, restarts: 20, max_iterations: 300, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Cluster per row, numbered by first appearance.
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Largest `k + 1` eigenvalues of `D^{-1/2} W D^{-1/2}`, descending.
    pub eigenvalues: Vec<f64>,
    /// Set when the k-th and (k+1)-th eigenvalues coincide, in which case
    /// the spectral embedding is not well defined and k-means ran on the raw
    /// rows instead.
    pub degenerate_eigenspace: bool,
    pub eigen_converged: bool,
}

pub fn spectral_cluster(features: ArrayView2<'_, f64>, cfg: &ClusterConfig) -> Result<ClusterResult, EvalError> {
    let m = features.nrows();
    let k = cfg.n_clusters;
    if !(k >= 2 && m > k) {
        return Err(EvalError::InvalidClusterCount { k, m });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::InvalidConfig("features contain non-finite values".into()));
    }
    let graph = cosine_knn_graph(features, cfg.n_neighbors.clamp(1, m - 1));
    let want = (k + 1).min(m);
    let (values, vectors, eigen_converged) = if m <= DENSE_LIMIT {
        let dense = graph.to_dense();
        let (vals, vecs) = linalg::symmetric_eigen(dense.view()).ok_or(EvalError::EigenSolverFailure)?;
        let top: Vec<usize> = (0..want).map(|i| m - 1 - i).collect();
        (top.iter().map(|&i| vals[i]).collect::<Vec<_>>(), vecs.select(Axis(1), &top), true)
    } else {
        block_krylov_top(&graph, want, cfg.seed)?
    };

    let degenerate = values.len() > k && (values[k - 1] - values[k]).abs() < 1e-10;
    let (labels, inertia) = if degenerate {
        kmeans(features, k, cfg.restarts, cfg.max_iterations, cfg.seed)
    } else {
        let mut embedding = vectors.slice(s![.., ..k]).to_owned();
        for mut row in embedding.rows_mut() {
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row /= norm;
            }
        }
        kmeans(embedding.view(), k, cfg.restarts, cfg.max_iterations, cfg.seed)
    };
    Ok(ClusterResult { labels, inertia, eigenvalues: values, degenerate_eigenspace: degenerate, eigen_converged })
}

/// Symmetric sparse matrix `D^{-1/2} W D^{-1/2}` in compressed rows.
struct NormalizedGraph {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl NormalizedGraph {
    fn size(&self) -> usize {
        self.offsets.len() - 1
    }

    fn to_dense(&self) -> Array2<f64> {
        let n = self.size();
        let mut a = Array2::zeros((n, n));
        for r in 0..n {
            for idx in self.offsets[r]..self.offsets[r + 1] {
                a[[r, self.cols[idx]]] += self.weights[idx];
            }
        }
        a
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let n = self.size();
        let mut out = Array2::zeros((n, x.ncols()));
        for r in 0..n {
            let mut row = out.row_mut(r);
            for idx in self.offsets[r]..self.offsets[r + 1] {
                row.scaled_add(self.weights[idx], &x.row(self.cols[idx]));
            }
        }
        out
    }
}

fn cosine_knn_graph(features: ArrayView2<'_, f64>, neighbors: usize) -> NormalizedGraph {
    let m = features.nrows();
    let mut unit = features.to_owned();
    for mut row in unit.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let mut triplets: Vec<(usize, usize)> = Vec::with_capacity(2 * m * neighbors);
    const CHUNK: usize = 256;
    for start in (0..m).step_by(CHUNK) {
        let end = (start + CHUNK).min(m);
        let sims = unit.slice(s![start..end, ..]).dot(&unit.t());
        for (offset, row) in sims.rows().into_iter().enumerate() {
            let i = start + offset;
            let mut candidates: Vec<(f64, usize)> =
                row.iter().enumerate().filter(|&(j, _)| j != i).map(|(j, &v)| (v, j)).collect();
            let by_rank = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
            candidates.select_nth_unstable_by(neighbors - 1, by_rank);
            for &(_, j) in &candidates[..neighbors] {
                triplets.push((i, j));
                triplets.push((j, i));
            }
        }
    }
    triplets.sort_unstable();
    // Each directed selection contributes ½, so mutual neighbours weigh 1.
    let mut offsets = vec![0usize; m + 1];
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    let mut idx = 0;
    while idx < triplets.len() {
        let (r, c) = triplets[idx];
        let mut w = 0.0;
        while idx < triplets.len() && triplets[idx] == (r, c) {
            w += 0.5;
            idx += 1;
        }
        cols.push(c);
        weights.push(w);
        offsets[r + 1] = cols.len();
    }
    for r in 0..m {
        offsets[r + 1] = offsets[r + 1].max(offsets[r]);
    }
    let mut degree = vec![0.0f64; m];
    for r in 0..m {
        degree[r] = weights[offsets[r]..offsets[r + 1]].iter().sum();
    }
    for r in 0..m {
        for idx in offsets[r]..offsets[r + 1] {
            weights[idx] /= (degree[r] * degree[cols[idx]]).sqrt();
        }
    }
    NormalizedGraph { offsets, cols, weights }
}

/// Orthonormalizes the columns of `block` against `basis` and each other
/// (two passes of classical Gram–Schmidt). Columns that vanish are dropped.
fn orthonormalize_against(basis: &[Array1<f64>], block: Array2<f64>) -> Vec<Array1<f64>> {
    let mut accepted: Vec<Array1<f64>> = Vec::new();
    for col in block.columns() {
        let mut v = col.to_owned();
        let original = v.dot(&v).sqrt();
        if original == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in basis.iter().chain(accepted.iter()) {
                let proj = q.dot(&v);
                v.scaled_add(-proj, q);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-10 * original {
            accepted.push(v / norm);
        }
    }
    accepted
}

/// Top `want` eigenpairs of the normalized graph via block Krylov iteration.
fn block_krylov_top(
    graph: &NormalizedGraph,
    want: usize,
    seed: u64,
) -> Result<(Vec<f64>, Array2<f64>, bool), EvalError> {
    let m = graph.size();
    let width = (want + 10).min(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c1a5);
    let start = Array2::from_shape_fn((m, width), |_| rng.random::<f64>() - 0.5);
    let mut basis = orthonormalize_against(&[], start);
    let mut block_start = 0;
    let max_basis = 1500.min(m);
    let tolerance = 1e-8;
    loop {
        // Extend the Krylov space with M applied to the newest block.
        let newest = Array2::from_shape_fn((m, basis.len() - block_start), |(r, c)| basis[block_start + c][r]);
        let product = graph.apply(newest.view());
        let fresh = orthonormalize_against(&basis, product);
        block_start = basis.len();
        let exhausted = fresh.is_empty();
        basis.extend(fresh);

        let s = basis.len();
        if s < want {
            if exhausted {
                return Err(EvalError::EigenSolverFailure);
            }
            continue;
        }
        let q = Array2::from_shape_fn((m, s), |(r, c)| basis[c][r]);
        let mq = graph.apply(q.view());
        let projected = q.t().dot(&mq);
        let (vals, vecs) = linalg::symmetric_eigen(projected.view()).ok_or(EvalError::EigenSolverFailure)?;
        let top: Vec<usize> = (0..want).map(|i| s - 1 - i).collect();
        let ritz_values: Vec<f64> = top.iter().map(|&i| vals[i]).collect();
        let coeffs = vecs.select(Axis(1), &top);
        let ritz = q.dot(&coeffs);
        let residual = mq.dot(&coeffs) - &(&ritz * &Array1::from(ritz_values.clone()));
        let worst = residual.columns().into_iter().map(|c| c.dot(&c).sqrt()).fold(0.0, f64::max);
        let converged = worst <= tolerance;
        if converged || exhausted || s + width > max_basis {
            return Ok((ritz_values, ritz, converged));
        }
    }
}

/// Lloyd's k-means with farthest-point seeding.
///
/// Restart `r` picks its first centre with a generator seeded from
/// `(seed, r)`; remaining centres are greedy farthest points. The lowest
/// inertia wins (earliest restart on ties). Empty clusters are refilled with
/// the point farthest from its centre.
pub fn kmeans(
    data: ArrayView2<'_, f64>,
    k: usize,
    restarts: usize,
    max_iterations: usize,
    seed: u64,
) -> (Vec<usize>, f64) {
    let m = data.nrows();
    assert!(k >= 1 && m >= k, "k-means needs at least k rows");
    let mut best: Option<(Vec<usize>, f64)> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(r as u64));
        let first = rng.random_range(0..m);
        let mut centers = Array2::zeros((k, data.ncols()));
        centers.row_mut(0).assign(&data.row(first));
        let mut nearest: Vec<f64> = (0..m).map(|i| sq_dist(data.row(i), centers.row(0))).collect();
        for c in 1..k {
            let far = argmax(&nearest);
            centers.row_mut(c).assign(&data.row(far));
            for i in 0..m {
                nearest[i] = nearest[i].min(sq_dist(data.row(i), centers.row(c)));
            }
        }
        let (labels, inertia) = lloyd(data, centers, max_iterations);
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((labels, inertia));
        }
    }
    let (labels, inertia) = best.expect("at least one restart");
    (relabel_by_first_appearance(&labels), inertia)
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

fn lloyd(data: ArrayView2<'_, f64>, mut centers: Array2<f64>, max_iterations: usize) -> (Vec<usize>, f64) {
    let (m, k) = (data.nrows(), centers.nrows());
    let mut labels = vec![usize::MAX; m];
    let mut dist = vec![0.0; m];
    for _ in 0..max_iterations.max(1) {
        let mut changed = false;
        for i in 0..m {
            let (mut bc, mut bd) = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(data.row(i), centers.row(c));
                if d < bd {
                    bd = d;
                    bc = c;
                }
            }
            dist[i] = bd;
            if labels[i] != bc {
                labels[i] = bc;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let donor = (0..m).filter(|&i| counts[labels[i]] > 1).max_by(|&a, &b| {
                    dist[a].total_cmp(&dist[b]).then(b.cmp(&a))
                });
                if let Some(i) = donor {
                    counts[labels[i]] -= 1;
                    labels[i] = c;
                    counts[c] = 1;
                    dist[i] = 0.0;
                    changed = true;
                }
            }
        }
        centers.fill(0.0);
        for i in 0..m {
            let mut row = centers.row_mut(labels[i]);
            row += &data.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = centers.row_mut(c);
                row /= counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..m).map(|i| sq_dist(data.row(i), centers.row(labels[i]))).sum();
    (labels, inertia)
}

fn relabel_by_first_appearance(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Adjusted Rand index between two labelings of the same rows.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len();
    let a = relabel_by_first_appearance(a);
    let b = relabel_by_first_appearance(b);
    let ka = a.iter().max().map_or(0, |x| x + 1);
    let kb = b.iter().max().map_or(0, |x| x + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(&b) {
        table[x][y] += 1;
    }
    let pairs = |c: u64| (c * c.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| pairs(table.iter().map(|r| r[j]).sum())).sum();
    let total = pairs(n as u64);
    let expected = if total > 0.0 { rows * cols / total } else { 0.0 };
    let max = 0.5 * (rows + cols);
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
