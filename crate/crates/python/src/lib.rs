//! Python bindings for the hyperwave core.
//!
//! Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use hyperwave_core::diffusion::DiffusionOperator;
use hyperwave_core::eval::{self, ClusterConfig, EvalConfig, VendiKernel};
use hyperwave_core::hypercore;
use hyperwave_core::niche::{self, GraphMethod, NicheConfig};
use hyperwave_core::pipeline::{self, Mode, RunOptions};
use hyperwave_core::signal::SignalMatrix;
use hyperwave_core::wavelets::{self, ScaleSequence};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect()).map_err(value_err)
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn scales_from(scales: Option<Vec<usize>>, j: usize) -> PyResult<ScaleSequence> {
    match scales {
        Some(s) => ScaleSequence::new(s).map_err(value_err),
        None => wavelets::dyadic_scales(j).map_err(value_err),
    }
}

/// A hypergraph on vertices `0..n` given by its hyperedge member lists.
#[pyclass(frozen)]
struct Hypergraph {
    inner: hypercore::Hypergraph,
}

#[pymethods]
impl Hypergraph {
    #[new]
    fn new(n: usize, edges: Vec<Vec<usize>>) -> PyResult<Self> {
        let inner = hypercore::Hypergraph::new(n, edges).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    fn edges(&self) -> Vec<Vec<usize>> {
        (0..self.inner.m()).map(|j| self.inner.edge_members(j).to_vec()).collect()
    }

    fn vertex_degrees(&self) -> Vec<usize> {
        self.inner.vertex_degrees()
    }

    fn edge_degrees(&self) -> Vec<usize> {
        self.inner.edge_degrees()
    }

    fn dual(&self) -> Self {
        Self { inner: self.inner.dual() }
    }

    fn incidence(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.incidence_dense())
    }

    /// Applies `P^t` to the columns of `x` (`n` rows).
    #[pyo3(signature = (x, t=1))]
    fn diffuse(&self, x: Vec<Vec<f64>>, t: usize) -> PyResult<Vec<Vec<f64>>> {
        let op = DiffusionOperator::new(&self.inner);
        let signal = SignalMatrix::new(to_array(x)?).map_err(value_err)?;
        let out = op.apply_power(&signal, t).map_err(value_err)?;
        Ok(to_rows(out.values()))
    }

    /// Dense `P`, for small hypergraphs.
    fn operator(&self) -> PyResult<Vec<Vec<f64>>> {
        let op = DiffusionOperator::new(&self.inner);
        Ok(to_rows(&op.dense_materialize().map_err(value_err)?))
    }

    /// `[Ψ₀x | … | Φx]` for explicit scales or the dyadic bank of depth `j`.
    #[pyo3(signature = (x, scales=None, j=4))]
    fn wavelet_transform(&self, x: Vec<Vec<f64>>, scales: Option<Vec<usize>>, j: usize) -> PyResult<Vec<Vec<f64>>> {
        let scales = scales_from(scales, j)?;
        let op = DiffusionOperator::new(&self.inner);
        let signal = SignalMatrix::new(to_array(x)?).map_err(value_err)?;
        let coeffs = wavelets::wavelet_transform(&op, &signal, &scales).map_err(value_err)?;
        Ok(to_rows(&coeffs.into_flattened()))
    }

    fn __repr__(&self) -> String {
        format!("Hypergraph(n={}, m={})", self.inner.n(), self.inner.m())
    }
}

#[pyfunction]
fn dyadic_scales(j: usize) -> PyResult<Vec<usize>> {
    Ok(wavelets::dyadic_scales(j).map_err(value_err)?.as_slice().to_vec())
}

/// One hyperedge per vertex holding every vertex within `k` hops.
#[pyfunction]
fn khop_lift(graph: &Hypergraph, k: usize) -> PyResult<Hypergraph> {
    Ok(Hypergraph { inner: niche::khop_lift(&graph.inner, k).map_err(value_err)? })
}

/// Spatial neighbour graph over `(x, y)` rows, as a 2-uniform hypergraph.
#[pyfunction]
#[pyo3(signature = (coords, method="delaunay", k=6))]
fn build_spatial_graph(coords: Vec<Vec<f64>>, method: &str, k: usize) -> PyResult<Hypergraph> {
    let graph_method = match method {
        "delaunay" => GraphMethod::Delaunay,
        "knn" => GraphMethod::Knn,
        other => return Err(PyValueError::new_err(format!("unknown graph method {other:?}"))),
    };
    let cfg = NicheConfig { graph_method, knn_k: k, ..NicheConfig::default() };
    let g = niche::build_spatial_graph(to_array(coords)?.view(), &cfg).map_err(value_err)?;
    Ok(Hypergraph { inner: g.graph })
}

#[pyfunction]
fn lognormalize(expression: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(to_rows(&niche::lognormalize(to_array(expression)?.view()).map_err(value_err)?))
}

#[pyfunction]
#[pyo3(signature = (features, kernel="cosine", bandwidth=1.0))]
fn vendi_score(features: Vec<Vec<f64>>, kernel: &str, bandwidth: f64) -> PyResult<f64> {
    let kernel = match kernel {
        "cosine" => VendiKernel::Cosine,
        "rbf" => VendiKernel::Rbf { bandwidth },
        other => return Err(PyValueError::new_err(format!("unknown kernel {other:?}"))),
    };
    eval::vendi_score(to_array(features)?.view(), &kernel).map_err(value_err)
}

/// Stratified multinomial logistic probe; returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (features, labels, seeds=vec![0, 1, 2, 3, 4], l2_penalty=1e-2))]
fn linear_probe(features: Vec<Vec<f64>>, labels: Vec<usize>, seeds: Vec<u64>, l2_penalty: f64) -> PyResult<String> {
    let cfg = EvalConfig { seeds, l2_penalty, ..EvalConfig::default() };
    let report = eval::linear_probe(to_array(features)?.view(), &labels, &cfg).map_err(value_err)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyfunction]
#[pyo3(signature = (features, n_clusters, n_neighbors=15, seed=0))]
fn spectral_cluster(features: Vec<Vec<f64>>, n_clusters: usize, n_neighbors: usize, seed: u64) -> PyResult<Vec<usize>> {
    let cfg = ClusterConfig { n_clusters, n_neighbors, seed, ..ClusterConfig::default() };
    Ok(eval::spectral_cluster(to_array(features)?.view(), &cfg).map_err(value_err)?.labels)
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err("label vectors differ in length"));
    }
    Ok(eval::adjusted_rand_index(&a, &b))
}

/// Runs the full pipeline from a config file; returns the written paths.
#[pyfunction]
#[pyo3(signature = (config, out=None, seed=None))]
fn run_pipeline(py: Python<'_>, config: PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> PyResult<Vec<String>> {
    let opts = RunOptions { out, seed, ..RunOptions::default() };
    let outcome = py
        .detach(|| pipeline::run_pipeline(&config, Mode::Run, &opts))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(outcome.manifest.outputs.iter().map(|f| f.path.display().to_string()).collect())
}

#[pymodule]
fn hyperwave(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Hypergraph>()?;
    m.add_function(wrap_pyfunction!(dyadic_scales, m)?)?;
    m.add_function(wrap_pyfunction!(khop_lift, m)?)?;
    m.add_function(wrap_pyfunction!(build_spatial_graph, m)?)?;
    m.add_function(wrap_pyfunction!(lognormalize, m)?)?;
    m.add_function(wrap_pyfunction!(vendi_score, m)?)?;
    m.add_function(wrap_pyfunction!(linear_probe, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
