//! Cellular niches as hyperedges.
//!
//! Cells become vertices of a proximity graph (Delaunay adjacency, which is
//! Voronoi-cell adjacency, or symmetrized kNN). Each cell then generates one
//! hyperedge holding every cell within `hop_k` graph hops. Hyperedges are
//! featurized from expression and cell-type labels, and the niche
//! representation is the wavelet transform of those features on the dual
//! hypergraph, where niches are the vertices.

mod features;
mod graph;
mod lift;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{DiffusionError, DiffusionOperator};
use crate::hypercore::{Hypergraph, HypergraphError};
use crate::signal::{SignalError, SignalMatrix};
use crate::wavelets::{wavelet_transform, ScaleSequence, WaveletError};

pub use features::{
    hyperedge_features, lognormalize, pearson, select_gene_pairs, FeatureColumn, HyperedgeFeatureMatrix,
    LIBRARY_SIZE,
};
pub use graph::{build_spatial_graph, JitterRecord, SpatialGraph};
pub use lift::khop_lift;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NicheError {
    #[error("need at least {min} points, got {n}")]
    TooFewPoints { n: usize, min: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("cell {cell} has total count 0")]
    ZeroLibraryCell { cell: usize },

    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },

    #[error("{granularity} code {code} is outside its vocabulary of {size} labels")]
    UnknownLabel { granularity: &'static str, code: usize, size: usize },

    #[error("gene pair ({a}, {b}) is invalid for {q} genes")]
    InvalidGenePair { a: usize, b: usize, q: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid niche config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),

    #[error(transparent)]
    Signal(#[from] SignalError),

    #[error(transparent)]
    Diffusion(#[from] DiffusionError),

    #[error(transparent)]
    Wavelet(#[from] WaveletError),
}

/// A categorical vector with a closed, sorted vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Categorical {
    vocabulary: Vec<String>,
    codes: Vec<usize>,
}

impl Categorical {
    /// Infers the vocabulary (sorted, deduplicated) from the labels.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut vocabulary: Vec<String> = labels.iter().map(|l| l.as_ref().to_owned()).collect();
        vocabulary.sort();
        vocabulary.dedup();
        let codes = labels
            .iter()
            .map(|l| vocabulary.binary_search_by(|v| v.as_str().cmp(l.as_ref())).expect("present"))
            .collect();
        Self { vocabulary, codes }
    }

    pub fn new(vocabulary: Vec<String>, codes: Vec<usize>) -> Result<Self, NicheError> {
        if let Some(&code) = codes.iter().find(|&&c| c >= vocabulary.len()) {
            return Err(NicheError::UnknownLabel { granularity: "label", code, size: vocabulary.len() });
        }
        Ok(Self { vocabulary, codes })
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.vocabulary[self.codes[i]]
    }

    /// Reorders entries: `out[i] = self[order[i]]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self { vocabulary: self.vocabulary.clone(), codes: order.iter().map(|&i| self.codes[i]).collect() }
    }
}

/// The three label granularities used for type-count features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    CellType,
    Subclass,
    Supertype,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [Granularity::CellType, Granularity::Subclass, Granularity::Supertype];

    pub fn name(self) -> &'static str {
        match self {
            Granularity::CellType => "cell_type",
            Granularity::Subclass => "subclass",
            Granularity::Supertype => "supertype",
        }
    }
}

/// Cells with coordinates, raw counts, a three-level type hierarchy and a
/// per-cell condition label.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDataset {
    pub cell_ids: Vec<String>,
    pub coords: Array2<f64>,
    pub genes: Vec<String>,
    pub expression: Array2<f64>,
    pub cell_types: Categorical,
    pub subclasses: Categorical,
    pub supertypes: Categorical,
    pub condition: Categorical,
}

impl SpatialDataset {
    pub fn validate(&self) -> Result<(), NicheError> {
        let n = self.cell_ids.len();
        let shape = |what, expected, got| {
            if expected != got {
                Err(NicheError::DimensionMismatch { what, expected, got })
            } else {
                Ok(())
            }
        };
        shape("coordinate rows", n, self.coords.nrows())?;
        shape("coordinate columns", 2, self.coords.ncols())?;
        shape("expression rows", n, self.expression.nrows())?;
        shape("expression columns", self.genes.len(), self.expression.ncols())?;
        for g in Granularity::ALL {
            shape("label count", n, self.labels(g).len())?;
        }
        shape("condition count", n, self.condition.len())?;
        if let Some(((r, _), _)) = self.coords.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(NicheError::InvalidDataset(format!("cell {} has a non-finite coordinate", r)));
        }
        if let Some(((r, c), v)) = self.expression.indexed_iter().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(NicheError::InvalidDataset(format!("cell {r}, gene {c}: count {v} is not a finite nonnegative number")));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn n_genes(&self) -> usize {
        self.genes.len()
    }

    pub fn labels(&self, g: Granularity) -> &Categorical {
        match g {
            Granularity::CellType => &self.cell_types,
            Granularity::Subclass => &self.subclasses,
            Granularity::Supertype => &self.supertypes,
        }
    }

    /// Cell `order[i]` of `self` becomes cell `i` of the result.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let rows = |a: &Array2<f64>| a.select(ndarray::Axis(0), order);
        Self {
            cell_ids: order.iter().map(|&i| self.cell_ids[i].clone()).collect(),
            coords: rows(&self.coords),
            genes: self.genes.clone(),
            expression: rows(&self.expression),
            cell_types: self.cell_types.permuted(order),
            subclasses: self.subclasses.permuted(order),
            supertypes: self.supertypes.permuted(order),
            condition: self.condition.permuted(order),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMethod {
    #[default]
    Delaunay,
    Knn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NicheConfig {
    pub graph_method: GraphMethod,
    pub knn_k: usize,
    pub hop_k: usize,
    /// Explicit gene-index pairs for pairwise correlations. When absent, all
    /// pairs among the `top_variance_genes` most variable genes are used.
    pub gene_pairs: Option<Vec<(usize, usize)>>,
    pub top_variance_genes: usize,
    pub min_cells_for_correlation: usize,
}

impl Default for NicheConfig {
    fn default() -> Self {
        Self {
            graph_method: GraphMethod::Delaunay,
            knn_k: 6,
            hop_k: 3,
            gene_pairs: None,
            top_variance_genes: 20,
            min_cells_for_correlation: 3,
        }
    }
}

impl NicheConfig {
    pub fn validate(&self) -> Result<(), NicheError> {
        let bad = |msg: &str| Err(NicheError::InvalidConfig(msg.to_owned()));
        if self.hop_k == 0 {
            return bad("hop_k must be at least 1");
        }
        if self.knn_k == 0 {
            return bad("knn_k must be at least 1");
        }
        if self.gene_pairs.is_none() && self.top_variance_genes < 2 {
            return bad("top_variance_genes must be at least 2");
        }
        if self.min_cells_for_correlation < 3 {
            return bad("min_cells_for_correlation must be at least 3");
        }
        Ok(())
    }
}

/// Wavelet representation of hyperedge features on the dual hypergraph.
///
/// Row `j` is hyperedge `j` (the niche anchored at `anchors[j]` when the
/// hypergraph came from [`khop_lift`]); columns are `[Ψ₀z | … | Φ_Jz]`.
pub fn niche_representations(
    g: &Hypergraph,
    z: ArrayView2<'_, f64>,
    scales: &ScaleSequence,
) -> Result<Array2<f64>, NicheError> {
    if z.nrows() != g.m() {
        return Err(NicheError::DimensionMismatch { what: "feature rows vs hyperedges", expected: g.m(), got: z.nrows() });
    }
    let dual = g.dual();
    let op = DiffusionOperator::new(&dual);
    let signal = SignalMatrix::new(z.to_owned())?;
    Ok(wavelet_transform(&op, &signal, scales)?.into_flattened())
}
