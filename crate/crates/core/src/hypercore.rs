//! Hypergraph incidence structure.
//!
//! A [`Hypergraph`] stores its 0/1 incidence matrix `H` (n vertices by m
//! hyperedges) twice, as compressed adjacency lists:
//!
//! ```text
//! edge-major:   e_j -> sorted member vertices      (columns of H)
//! vertex-major: v_i -> sorted incident hyperedges  (rows of H)
//! ```
//!
//! Both views are built once and never mutated, so the diffusion kernels can
//! walk whichever orientation they need without transposing.

use std::collections::VecDeque;

use ndarray::Array2;
use thiserror::Error;

/// Distance reported for vertices that cannot be reached from the source.
pub const UNREACHABLE: usize = usize::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HypergraphError {
    #[error("hyperedge {edge} has no members")]
    EmptyEdge { edge: usize },

    #[error("vertex {vertex} belongs to no hyperedge")]
    IsolatedVertex { vertex: usize },

    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("anchor vector has length {got}, expected one anchor per hyperedge ({expected})")]
    AnchorLength { got: usize, expected: usize },
}

/// Compressed adjacency: `targets[offsets[i]..offsets[i + 1]]` lists row `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Adjacency {
    fn row(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    fn len(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Transpose of a `rows` x `cols` relation. Rows of the result come out
    /// sorted because the source rows are visited in order.
    fn transpose(&self, cols: usize) -> Adjacency {
        let rows = self.offsets.len() - 1;
        let mut counts = vec![0usize; cols + 1];
        for &t in &self.targets {
            counts[t + 1] += 1;
        }
        for c in 0..cols {
            counts[c + 1] += counts[c];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut targets = vec![0usize; self.targets.len()];
        for r in 0..rows {
            for &t in self.row(r) {
                targets[cursor[t]] = r;
                cursor[t] += 1;
            }
        }
        Adjacency { offsets, targets }
    }
}

/// An unweighted hypergraph with dense 0-based vertex and hyperedge indices.
///
/// Immutable after construction. Duplicate hyperedges (identical member sets)
/// are kept as distinct edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph {
    n: usize,
    m: usize,
    edges: Adjacency,
    vertices: Adjacency,
    anchors: Option<Vec<usize>>,
}

impl Hypergraph {
    /// Builds a hypergraph on `n` vertices from a list of hyperedges.
    ///
    /// Repeated indices inside one hyperedge collapse (incidence is 0/1).
    /// Every hyperedge must be nonempty and every vertex must belong to at
    /// least one hyperedge, otherwise the degree inverses used by diffusion
    /// would be undefined.
    pub fn new<E, I>(n: usize, edges: E) -> Result<Self, HypergraphError>
    where
        E: IntoIterator<Item = I>,
        I: IntoIterator<Item = usize>,
    {
        let mut offsets = vec![0usize];
        let mut targets = Vec::new();
        for (j, edge) in edges.into_iter().enumerate() {
            let start = targets.len();
            for v in edge {
                if v >= n {
                    return Err(HypergraphError::IndexOutOfRange { index: v, bound: n });
                }
                targets.push(v);
            }
            if targets.len() == start {
                return Err(HypergraphError::EmptyEdge { edge: j });
            }
            targets[start..].sort_unstable();
            let mut w = start + 1;
            for r in start + 1..targets.len() {
                if targets[r] != targets[w - 1] {
                    targets[w] = targets[r];
                    w += 1;
                }
            }
            targets.truncate(w);
            offsets.push(targets.len());
        }
        let edges = Adjacency { offsets, targets };
        Self::from_edge_adjacency(n, edges)
    }

    fn from_edge_adjacency(n: usize, edges: Adjacency) -> Result<Self, HypergraphError> {
        let m = edges.offsets.len() - 1;
        let vertices = edges.transpose(n);
        if let Some(vertex) = (0..n).find(|&i| vertices.len(i) == 0) {
            return Err(HypergraphError::IsolatedVertex { vertex });
        }
        Ok(Self { n, m, edges, vertices, anchors: None })
    }

    /// Attaches the generating vertex of each hyperedge.
    pub fn with_anchors(mut self, anchors: Vec<usize>) -> Result<Self, HypergraphError> {
        if anchors.len() != self.m {
            return Err(HypergraphError::AnchorLength { got: anchors.len(), expected: self.m });
        }
        if let Some(&index) = anchors.iter().find(|&&a| a >= self.n) {
            return Err(HypergraphError::IndexOutOfRange { index, bound: self.n });
        }
        self.anchors = Some(anchors);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of nonzeros of the incidence matrix.
    pub fn nnz(&self) -> usize {
        self.edges.targets.len()
    }

    pub fn edge_members(&self, j: usize) -> &[usize] {
        self.edges.row(j)
    }

    pub fn vertex_edges(&self, i: usize) -> &[usize] {
        self.vertices.row(i)
    }

    pub fn vertex_degree(&self, i: usize) -> usize {
        self.vertices.len(i)
    }

    pub fn edge_degree(&self, j: usize) -> usize {
        self.edges.len(j)
    }

    pub fn vertex_degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.vertices.len(i)).collect()
    }

    pub fn edge_degrees(&self) -> Vec<usize> {
        (0..self.m).map(|j| self.edges.len(j)).collect()
    }

    pub fn anchors(&self) -> Option<&[usize]> {
        self.anchors.as_deref()
    }

    pub fn is_uniform(&self, size: usize) -> bool {
        (0..self.m).all(|j| self.edges.len(j) == size)
    }

    /// Dual hypergraph: vertices and hyperedges swap roles (incidence `Hᵀ`).
    /// Anchors are dropped.
    pub fn dual(&self) -> Hypergraph {
        // Vertex-major rows become the hyperedges of the dual, and every
        // original hyperedge is nonempty, so the dual has no isolated vertex.
        let dual = Hypergraph {
            n: self.m,
            m: self.n,
            edges: self.vertices.clone(),
            vertices: self.edges.clone(),
            anchors: None,
        };
        debug_assert!((0..dual.n).all(|i| dual.vertices.len(i) > 0));
        dual
    }

    /// Dense copy of `H`. Intended for small instances and test oracles.
    pub fn incidence_dense(&self) -> Array2<f64> {
        let mut h = Array2::zeros((self.n, self.m));
        for j in 0..self.m {
            for &i in self.edges.row(j) {
                h[[i, j]] = 1.0;
            }
        }
        h
    }

    pub fn bipartite_expansion(&self) -> BipartiteExpansion {
        let size = self.n + self.m;
        let mut offsets = Vec::with_capacity(size + 1);
        let mut targets = Vec::with_capacity(2 * self.nnz());
        offsets.push(0);
        for i in 0..self.n {
            targets.extend(self.vertices.row(i).iter().map(|&j| self.n + j));
            offsets.push(targets.len());
        }
        for j in 0..self.m {
            targets.extend_from_slice(self.edges.row(j));
            offsets.push(targets.len());
        }
        let degrees = self.vertex_degrees().into_iter().chain(self.edge_degrees()).collect();
        BipartiteExpansion { n: self.n, m: self.m, adjacency: Adjacency { offsets, targets }, degrees }
    }

    /// Hyperedge-hop distances from `source` to every vertex.
    ///
    /// Breadth-first search alternating vertex -> hyperedge -> vertex; each
    /// hyperedge crossed counts one hop. Unreachable vertices get
    /// [`UNREACHABLE`].
    pub fn distances_from(&self, source: usize) -> Result<Vec<usize>, HypergraphError> {
        if source >= self.n {
            return Err(HypergraphError::IndexOutOfRange { index: source, bound: self.n });
        }
        let mut dist = vec![UNREACHABLE; self.n];
        let mut edge_seen = vec![false; self.m];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            for &e in self.vertices.row(v) {
                if edge_seen[e] {
                    continue;
                }
                edge_seen[e] = true;
                for &w in self.edges.row(e) {
                    if dist[w] == UNREACHABLE {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
        }
        Ok(dist)
    }
}

/// Bipartite graph on `vertices ∪ hyperedges`, linking each vertex to the
/// hyperedges that contain it. Node `i < n` is vertex `i`; node `n + j` is
/// hyperedge `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteExpansion {
    n: usize,
    m: usize,
    adjacency: Adjacency,
    degrees: Vec<usize>,
}

impl BipartiteExpansion {
    pub fn size(&self) -> usize {
        self.n + self.m
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        self.adjacency.row(node)
    }

    /// `[vertex_degrees ‖ edge_degrees]`, the diagonal of `D̃`.
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn adjacency_dense(&self) -> Array2<f64> {
        let size = self.size();
        let mut a = Array2::zeros((size, size));
        for r in 0..size {
            for &c in self.adjacency.row(r) {
                a[[r, c]] = 1.0;
            }
        }
        a
    }

    /// `I − D̃^{-1/2} Ã D̃^{-1/2}`, dense.
    pub fn normalized_laplacian_dense(&self) -> Array2<f64> {
        let size = self.size();
        let mut l = Array2::eye(size);
        for r in 0..size {
            for &c in self.adjacency.row(r) {
                l[[r, c]] -= 1.0 / ((self.degrees[r] * self.degrees[c]) as f64).sqrt();
            }
        }
        l
    }
}
