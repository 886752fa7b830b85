//! Independent reference implementations used only by tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use hyperwave_core::hypercore::Hypergraph;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random hypergraph with every vertex covered and mixed edge sizes.
pub fn random_hypergraph(rng: &mut ChaCha8Rng, n: usize, m: usize, max_size: usize) -> Hypergraph {
    let mut edges: Vec<Vec<usize>> = (0..m)
        .map(|_| {
            let size = rng.random_range(1..=max_size.min(n));
            (0..size).map(|_| rng.random_range(0..n)).collect()
        })
        .collect();
    // Cover stragglers with extra pairs so no vertex is isolated.
    let mut covered = vec![false; n];
    for e in &edges {
        for &v in e {
            covered[v] = true;
        }
    }
    for v in 0..n {
        if !covered[v] {
            edges.push(vec![v, rng.random_range(0..n)]);
        }
    }
    Hypergraph::new(n, edges).unwrap()
}

/// Random simple graph as an edge list, connected through a random spanning path.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect();
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

pub fn graph_hypergraph(n: usize, edges: &[(usize, usize)]) -> Hypergraph {
    Hypergraph::new(n, edges.iter().map(|&(a, b)| vec![a, b])).unwrap()
}

pub fn path_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n - 1).map(|i| (i, i + 1)).collect()
}

/// Dense incidence built directly from the edge lists.
pub fn incidence(g: &Hypergraph) -> Array2<f64> {
    let mut h = Array2::zeros((g.n(), g.m()));
    for j in 0..g.m() {
        for &v in g.edge_members(j) {
            h[[v, j]] = 1.0;
        }
    }
    h
}

/// `H D_E⁻¹ Hᵀ D_V⁻¹` by dense products.
pub fn dense_operator(g: &Hypergraph) -> Array2<f64> {
    let h = incidence(g);
    let de: Vec<f64> = h.columns().into_iter().map(|c| c.sum()).collect();
    let dv: Vec<f64> = h.rows().into_iter().map(|r| r.sum()).collect();
    let mut h_de = h.clone();
    for (j, mut c) in h_de.columns_mut().into_iter().enumerate() {
        c /= de[j];
    }
    let mut p = h_de.dot(&h.t());
    for (i, mut c) in p.columns_mut().into_iter().enumerate() {
        c /= dv[i];
    }
    p
}

pub fn matrix_power(a: &Array2<f64>, t: usize) -> Array2<f64> {
    let mut out = Array2::eye(a.nrows());
    for _ in 0..t {
        out = a.dot(&out);
    }
    out
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
pub fn jacobi_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut a = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[[i, j]].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut vals: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// `exp(entropy)` of a kernel's normalized spectrum via Jacobi.
pub fn vendi_oracle(kernel: &Array2<f64>) -> f64 {
    let m = kernel.nrows() as f64;
    let vals = jacobi_eigenvalues(&(kernel / m));
    let h: f64 = vals.iter().filter(|&&l| l > 0.0).map(|&l| -l * l.ln()).sum();
    h.exp()
}

pub fn cosine_kernel(x: &Array2<f64>) -> Array2<f64> {
    let m = x.nrows();
    let norms: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    Array2::from_shape_fn((m, m), |(i, j)| x.row(i).dot(&x.row(j)) / (norms[i] * norms[j]))
}

/// Hop distances on a simple graph by breadth-first search.
pub fn bfs(n: usize, edges: &[(usize, usize)], src: usize) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut dist = vec![usize::MAX; n];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Delaunay edges by the empty-circumcircle test over all triples (O(n⁴)).
pub fn brute_delaunay(points: &[[f64; 2]]) -> Vec<(usize, usize)> {
    let n = points.len();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let (pa, pb, pc) = (points[a], points[b], points[c]);
                let orient = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0]);
                if orient.abs() < 1e-12 {
                    continue;
                }
                let empty = (0..n).filter(|&d| d != a && d != b && d != c).all(|d| {
                    let pd = points[d];
                    let row = |p: [f64; 2]| {
                        let (dx, dy) = (p[0] - pd[0], p[1] - pd[1]);
                        [dx, dy, dx * dx + dy * dy]
                    };
                    let (r1, r2, r3) = (row(pa), row(pb), row(pc));
                    let det = r1[0] * (r2[1] * r3[2] - r2[2] * r3[1]) - r1[1] * (r2[0] * r3[2] - r2[2] * r3[0])
                        + r1[2] * (r2[0] * r3[1] - r2[1] * r3[0]);
                    det * orient.signum() <= 1e-12
                });
                if empty {
                    edges.extend([(a, b), (a, c), (b, c)]);
                }
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Pairs `(a, b)`, `a < b`, joined by a 2-element hyperedge.
pub fn edge_pairs(g: &Hypergraph) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..g.m())
        .map(|j| {
            let e = g.edge_members(j);
            assert_eq!(e.len(), 2);
            (e[0], e[1])
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Two unit Gaussian blobs centred at `∓gap/2` on the first axis.
pub fn two_blobs(rng: &mut ChaCha8Rng, per: usize, dim: usize, gap: f64) -> (Array2<f64>, Vec<usize>) {
    use rand_distr::{Distribution, StandardNormal};
    let mut x = Array2::zeros((2 * per, dim));
    let mut y = Vec::with_capacity(2 * per);
    for i in 0..2 * per {
        let class = i / per;
        for d in 0..dim {
            let v: f64 = StandardNormal.sample(rng);
            x[[i, d]] = v + if d == 0 { gap * (class as f64 - 0.5) } else { 0.0 };
        }
        y.push(class);
    }
    (x, y)
}

/// Hypergraphs with up to `max_n` vertices and `max_m` edges of mixed size.
/// Vertices left uncovered get a singleton edge.
pub fn arb_hypergraph(max_n: usize, max_m: usize) -> impl proptest::strategy::Strategy<Value = Hypergraph> {
    use proptest::prelude::*;
    (1..=max_n)
        .prop_flat_map(move |n| (Just(n), proptest::collection::vec(proptest::collection::vec(0..n, 1..=n.min(6)), 1..=max_m)))
        .prop_map(|(n, mut edges)| {
            let mut covered = vec![false; n];
            edges.iter().flatten().for_each(|&v| covered[v] = true);
            edges.extend((0..n).filter(|&v| !covered[v]).map(|v| vec![v]));
            Hypergraph::new(n, edges).unwrap()
        })
}

/// Connected hypergraphs: a random spanning chain of pairs plus random edges.
pub fn arb_connected_hypergraph(max_n: usize, max_extra: usize) -> impl proptest::strategy::Strategy<Value = Hypergraph> {
    use proptest::prelude::*;
    (2..=max_n)
        .prop_flat_map(move |n| {
            (
                Just(n),
                Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
                proptest::collection::vec(proptest::collection::vec(0..n, 1..=n.min(5)), 0..=max_extra),
            )
        })
        .prop_map(|(n, order, mut edges)| {
            edges.extend(order.windows(2).map(|w| w.to_vec()));
            Hypergraph::new(n, edges).unwrap()
        })
}

/// Adjusted Rand index from the pair-counting contingency table.
pub fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
    use std::collections::HashMap;
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sb: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(a.len());
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
