//! Dense real-valued signals on the vertices of a hypergraph.

use ndarray::{Array1, Array2, ArrayView2};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("non-finite signal value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
}

/// A matrix whose rows are indexed by vertices and whose columns are signals.
///
/// All entries are finite; this is checked once on construction so the
/// operators downstream never have to.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    values: Array2<f64>,
}

impl SignalMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self, SignalError> {
        for ((row, col), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(SignalError::NonFinite { row, col });
            }
        }
        Ok(Self { values: values.as_standard_layout().into_owned() })
    }

    /// Single-column signal.
    pub fn from_vec(values: Vec<f64>) -> Result<Self, SignalError> {
        let n = values.len();
        Self::new(Array1::from(values).into_shape_with_order((n, 1)).expect("column shape"))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { values: Array2::zeros((rows, cols)) }
    }

    /// Column `i` of the identity, as a one-column signal.
    pub fn basis(rows: usize, i: usize) -> Self {
        let mut values = Array2::zeros((rows, 1));
        values[[i, 0]] = 1.0;
        Self { values }
    }

    // Operators produce finite output from finite input, so they skip the scan.
    pub(crate) fn from_trusted(values: Array2<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    /// Column `j` copied out as a vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).to_vec()
    }
}
