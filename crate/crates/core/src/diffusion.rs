//! The hypergraph random walk `P_H = H D_E⁻¹ Hᵀ D_V⁻¹`.
//!
//! `P_H` is the vertex block of the squared random walk `(ÃD̃⁻¹)²` on the
//! bipartite expansion. A walker at vertex `v` picks an incident hyperedge
//! uniformly, then a member of that hyperedge uniformly. The operator is
//! column-stochastic and, on 2-uniform hypergraphs, equals the lazy walk
//! `½(I + A D⁻¹)`.
//!
//! [`DiffusionOperator::apply`] never forms `P_H`; it runs four sparse stages
//! (scale by `D_V⁻¹`, gather with `Hᵀ`, scale by `D_E⁻¹`, gather with `H`) at
//! `O(nnz(H))` per signal column. The dense routines exist for test oracles
//! and spectral checks on small instances.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use thiserror::Error;

use crate::hypercore::Hypergraph;
use crate::linalg;
use crate::signal::SignalMatrix;

/// Largest vertex count the dense routines accept by default.
pub const DEFAULT_DENSE_CAP: usize = 2000;

// Below this many output rows the kernels stay on the calling thread.
const PARALLEL_ROWS: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("signal has {got} rows, operator acts on {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dense materialization of a {n}-vertex operator exceeds the cap of {cap}")]
    SizeCapExceeded { n: usize, cap: usize },

    #[error("symmetric eigensolver did not converge")]
    EigenSolverFailure,

    #[error("hyperedge {edge} has {degree} members; the lazy walk needs a 2-uniform hypergraph")]
    NotTwoUniform { edge: usize, degree: usize },
}

/// Matrix-free `P_H` over a borrowed hypergraph.
#[derive(Debug, Clone)]
pub struct DiffusionOperator<'g> {
    graph: &'g Hypergraph,
    inv_vertex_degrees: Vec<f64>,
    inv_edge_degrees: Vec<f64>,
}

impl<'g> DiffusionOperator<'g> {
    pub fn new(graph: &'g Hypergraph) -> Self {
        let inv_vertex_degrees = (0..graph.n()).map(|i| 1.0 / graph.vertex_degree(i) as f64).collect();
        let inv_edge_degrees = (0..graph.m()).map(|j| 1.0 / graph.edge_degree(j) as f64).collect();
        Self { graph, inv_vertex_degrees, inv_edge_degrees }
    }

    pub fn graph(&self) -> &'g Hypergraph {
        self.graph
    }

    /// Operator dimension (vertex count).
    pub fn dim(&self) -> usize {
        self.graph.n()
    }

    pub fn inv_vertex_degrees(&self) -> &[f64] {
        &self.inv_vertex_degrees
    }

    pub fn inv_edge_degrees(&self) -> &[f64] {
        &self.inv_edge_degrees
    }

    fn check_rows(&self, rows: usize) -> Result<(), DiffusionError> {
        if rows != self.dim() {
            return Err(DiffusionError::DimensionMismatch { expected: self.dim(), got: rows });
        }
        Ok(())
    }

    /// `P_H x`.
    pub fn apply(&self, x: &SignalMatrix) -> Result<SignalMatrix, DiffusionError> {
        self.check_rows(x.rows())?;
        Ok(SignalMatrix::from_trusted(self.apply_unchecked(x.view())))
    }

    /// `P_H^t x`, by `t` successive applications. `t = 0` returns `x`.
    pub fn apply_power(&self, x: &SignalMatrix, t: usize) -> Result<SignalMatrix, DiffusionError> {
        self.check_rows(x.rows())?;
        let mut y = x.values().clone();
        for _ in 0..t {
            y = self.apply_unchecked(y.view());
        }
        Ok(SignalMatrix::from_trusted(y))
    }

    /// `P_H x` for a standard-layout (or any) view with `n` rows.
    ///
    /// Every output row is an independent fixed-order sum, so the result is
    /// bitwise identical for any thread count.
    pub(crate) fn apply_unchecked(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let g = self.graph;
        let cols = x.ncols();
        let x = x.as_standard_layout();
        let x = x.as_slice().expect("standard layout");

        // Stages 1-3: y_e = (1/|e|) Σ_{v∈e} x_v / deg(v)
        let mut on_edges = vec![0.0; g.m() * cols];
        let gather_edge = |(j, row): (usize, &mut [f64])| {
            for &v in g.edge_members(j) {
                let w = self.inv_vertex_degrees[v];
                for (acc, &xv) in row.iter_mut().zip(&x[v * cols..(v + 1) * cols]) {
                    *acc += w * xv;
                }
            }
            let s = self.inv_edge_degrees[j];
            row.iter_mut().for_each(|acc| *acc *= s);
        };
        run_rows(&mut on_edges, cols, g.m(), gather_edge);

        // Stage 4: out_v = Σ_{e∋v} y_e
        let mut out = vec![0.0; g.n() * cols];
        let gather_vertex = |(i, row): (usize, &mut [f64])| {
            for &e in g.vertex_edges(i) {
                for (acc, &ye) in row.iter_mut().zip(&on_edges[e * cols..(e + 1) * cols]) {
                    *acc += ye;
                }
            }
        };
        run_rows(&mut out, cols, g.n(), gather_vertex);

        Array2::from_shape_vec((g.n(), cols), out).expect("output shape")
    }

    /// Dense `P_H`, refusing operators above [`DEFAULT_DENSE_CAP`] vertices.
    pub fn dense_materialize(&self) -> Result<Array2<f64>, DiffusionError> {
        self.dense_materialize_capped(DEFAULT_DENSE_CAP)
    }

    pub fn dense_materialize_capped(&self, cap: usize) -> Result<Array2<f64>, DiffusionError> {
        let n = self.dim();
        if n > cap {
            return Err(DiffusionError::SizeCapExceeded { n, cap });
        }
        let g = self.graph;
        let mut p = Array2::zeros((n, n));
        for j in 0..g.m() {
            let members = g.edge_members(j);
            let s = self.inv_edge_degrees[j];
            for &row in members {
                for &col in members {
                    p[[row, col]] += s * self.inv_vertex_degrees[col];
                }
            }
        }
        Ok(p)
    }

    /// All eigenvalues of `P_H`, descending.
    ///
    /// Computed from the symmetric similar matrix
    /// `S = D_V^{-1/2} H D_E⁻¹ Hᵀ D_V^{-1/2}`, which is positive semidefinite,
    /// so the spectrum is real and lies in `[0, 1]` up to roundoff. A
    /// disconnected hypergraph has eigenvalue 1 once per component.
    pub fn eigenvalues_dense(&self) -> Result<Vec<f64>, DiffusionError> {
        self.eigenvalues_dense_capped(DEFAULT_DENSE_CAP)
    }

    pub fn eigenvalues_dense_capped(&self, cap: usize) -> Result<Vec<f64>, DiffusionError> {
        let n = self.dim();
        if n > cap {
            return Err(DiffusionError::SizeCapExceeded { n, cap });
        }
        let g = self.graph;
        let root: Vec<f64> = self.inv_vertex_degrees.iter().map(|w| w.sqrt()).collect();
        let mut s = Array2::zeros((n, n));
        for j in 0..g.m() {
            let members = g.edge_members(j);
            let w = self.inv_edge_degrees[j];
            for &a in members {
                for &b in members {
                    s[[a, b]] += w * root[a] * root[b];
                }
            }
        }
        let mut values =
            linalg::symmetric_eigenvalues(s.view()).ok_or(DiffusionError::EigenSolverFailure)?.to_vec();
        values.reverse();
        Ok(values)
    }
}

fn run_rows<F>(buf: &mut [f64], cols: usize, rows: usize, f: F)
where
    F: Fn((usize, &mut [f64])) + Sync + Send,
{
    if cols == 0 {
        return;
    }
    if rows >= PARALLEL_ROWS {
        buf.par_chunks_mut(cols).enumerate().with_min_len(256).for_each(f);
    } else {
        buf.chunks_mut(cols).enumerate().for_each(f);
    }
}

/// `½(I + A D⁻¹)` built from the ordinary adjacency of a 2-uniform hypergraph.
pub fn lazy_walk_reference(g: &Hypergraph) -> Result<Array2<f64>, DiffusionError> {
    if let Some(edge) = (0..g.m()).find(|&j| g.edge_degree(j) != 2) {
        return Err(DiffusionError::NotTwoUniform { edge, degree: g.edge_degree(edge) });
    }
    let n = g.n();
    let mut adjacency = Array2::<f64>::zeros((n, n));
    for j in 0..g.m() {
        let e = g.edge_members(j);
        adjacency[[e[0], e[1]]] += 1.0;
        adjacency[[e[1], e[0]]] += 1.0;
    }
    let degrees = g.vertex_degrees();
    let mut p = Array2::eye(n) * 0.5;
    for r in 0..n {
        for c in 0..n {
            p[[r, c]] += 0.5 * adjacency[[r, c]] / degrees[c] as f64;
        }
    }
    Ok(p)
}
