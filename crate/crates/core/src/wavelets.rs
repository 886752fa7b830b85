//! Multiscale diffusion wavelets over a [`DiffusionOperator`].
//!
//! For scales `0 = s₀ ≤ s₁ = 1 ≤ … ≤ s_J` the bank is
//!
//! ```text
//! Ψ_i = P^{s_i} − P^{s_{i+1}}   (i = 0 … J−1)
//! Φ_J = P^{s_J}
//! ```
//!
//! The transform walks a single cursor `y_t = P^t x` from `t = 0` to `s_J`,
//! so it costs exactly `s_J` operator applications regardless of `J`.
//! Because `s₀ = 0`, the blocks telescope: `Σ Ψ_i x + Φ_J x = x`.
//! Equal consecutive scales are allowed and give an all-zero `Ψ_i`.

use ndarray::{s, Array2, ArrayView2};
use thiserror::Error;

use crate::diffusion::DiffusionOperator;
use crate::hypercore::Hypergraph;
use crate::signal::SignalMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveletError {
    #[error("J must be at least 1, got {0}")]
    InvalidJ(usize),

    #[error("invalid scale sequence {scales:?}: {reason}")]
    InvalidScales { scales: Vec<usize>, reason: &'static str },

    #[error("signal has {got} rows, operator acts on {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Nondecreasing diffusion scales `s₀ = 0, s₁ = 1, …, s_J` with `J ≥ 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ScaleSequence(Vec<usize>);

impl ScaleSequence {
    pub fn new(scales: Vec<usize>) -> Result<Self, WaveletError> {
        let bad = |reason| Err(WaveletError::InvalidScales { scales: scales.clone(), reason });
        if scales.len() < 2 {
            return bad("need at least s0 and s1");
        }
        if scales[0] != 0 || scales[1] != 1 {
            return bad("must start with 0, 1");
        }
        if scales.windows(2).any(|w| w[1] < w[0]) {
            return bad("must be nondecreasing");
        }
        Ok(Self(scales))
    }

    /// `(0, 1, 2, 4, …, 2^{J−1})`.
    pub fn dyadic(j: usize) -> Result<Self, WaveletError> {
        if j == 0 {
            return Err(WaveletError::InvalidJ(j));
        }
        let mut scales = vec![0];
        scales.extend((0..j).map(|i| 1usize << i));
        Ok(Self(scales))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Number of band-pass filters.
    pub fn j(&self) -> usize {
        self.0.len() - 1
    }

    /// Largest scale, i.e. the number of operator applications per transform.
    pub fn max_scale(&self) -> usize {
        *self.0.last().expect("nonempty")
    }
}

impl Default for ScaleSequence {
    fn default() -> Self {
        Self::dyadic(4).expect("J = 4")
    }
}

impl TryFrom<Vec<usize>> for ScaleSequence {
    type Error = WaveletError;

    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ScaleSequence> for Vec<usize> {
    fn from(s: ScaleSequence) -> Self {
        s.0
    }
}

pub fn dyadic_scales(j: usize) -> Result<ScaleSequence, WaveletError> {
    ScaleSequence::dyadic(j)
}

/// Wavelet coefficients `[Ψ₀x | … | Ψ_{J−1}x | Φ_Jx]`, stored flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoefficients {
    features: Array2<f64>,
    signal_cols: usize,
    n_blocks: usize,
}

impl WaveletCoefficients {
    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// Block `i`: `Ψ_i x` for `i < J`, `Φ_J x` for `i = J`.
    pub fn block(&self, i: usize) -> ArrayView2<'_, f64> {
        assert!(i < self.n_blocks, "block {i} out of range");
        let c = self.signal_cols;
        self.features.slice(s![.., i * c..(i + 1) * c])
    }

    pub fn low_pass(&self) -> ArrayView2<'_, f64> {
        self.block(self.n_blocks - 1)
    }

    /// `rows × (J+1)·cols` feature matrix, blocks in scale order.
    pub fn flattened(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn into_flattened(self) -> Array2<f64> {
        self.features
    }
}

/// Applies the wavelet bank of `scales` to every column of `x`.
pub fn wavelet_transform(
    op: &DiffusionOperator<'_>,
    x: &SignalMatrix,
    scales: &ScaleSequence,
) -> Result<WaveletCoefficients, WaveletError> {
    if x.rows() != op.dim() {
        return Err(WaveletError::DimensionMismatch { expected: op.dim(), got: x.rows() });
    }
    let (rows, cols) = (x.rows(), x.cols());
    let sc = scales.as_slice();
    let n_blocks = sc.len();
    let mut features = Array2::zeros((rows, n_blocks * cols));

    let mut cursor = x.values().clone();
    let mut t = 0;
    for i in 0..n_blocks - 1 {
        let mut block = features.slice_mut(s![.., i * cols..(i + 1) * cols]);
        block.assign(&cursor);
        while t < sc[i + 1] {
            cursor = op.apply_unchecked(cursor.view());
            t += 1;
        }
        block -= &cursor;
    }
    features.slice_mut(s![.., (n_blocks - 1) * cols..]).assign(&cursor);

    Ok(WaveletCoefficients { features, signal_cols: cols, n_blocks })
}

/// Predicted arithmetic for one transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperationCount {
    /// Sparse multiply-adds: `2 · nnz(H) · s_J · n_signals`.
    pub multiply_adds: u64,
    /// Vector subtractions forming the band-pass blocks: `n · J · n_signals`.
    pub subtractions: u64,
}

impl OperationCount {
    pub fn total(&self) -> u64 {
        self.multiply_adds + self.subtractions
    }
}

pub fn transform_count(g: &Hypergraph, scales: &ScaleSequence, n_signals: usize) -> OperationCount {
    let signals = n_signals as u64;
    OperationCount {
        multiply_adds: 2 * g.nnz() as u64 * scales.max_scale() as u64 * signals,
        subtractions: g.n() as u64 * scales.j() as u64 * signals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_sequences() {
        assert_eq!(dyadic_scales(1).unwrap().as_slice(), &[0, 1]);
        assert_eq!(dyadic_scales(4).unwrap().as_slice(), &[0, 1, 2, 4, 8]);
        assert_eq!(dyadic_scales(6).unwrap().as_slice(), &[0, 1, 2, 4, 8, 16, 32]);
        assert_eq!(dyadic_scales(0).unwrap_err(), WaveletError::InvalidJ(0));
        assert_eq!(ScaleSequence::default().as_slice(), &[0, 1, 2, 4, 8]);
    }

    #[test]
    fn scale_validation() {
        assert!(ScaleSequence::new(vec![0]).is_err());
        assert!(ScaleSequence::new(vec![1, 2]).is_err());
        assert!(ScaleSequence::new(vec![0, 2]).is_err());
        assert!(ScaleSequence::new(vec![0, 1, 3, 2]).is_err());
        assert!(ScaleSequence::new(vec![0, 1, 1, 3]).is_ok());
    }

    #[test]
    fn single_edge_bank() {
        let g = Hypergraph::new(2, vec![vec![0, 1]]).unwrap();
        let op = DiffusionOperator::new(&g);
        let x = SignalMatrix::basis(2, 0);
        let w = wavelet_transform(&op, &x, &dyadic_scales(1).unwrap()).unwrap();
        assert_eq!(w.n_blocks(), 2);
        assert_eq!(w.block(0).column(0).to_vec(), vec![0.5, -0.5]);
        assert_eq!(w.low_pass().column(0).to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn repeated_scale_gives_zero_block() {
        let g = Hypergraph::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let op = DiffusionOperator::new(&g);
        let x = SignalMatrix::basis(3, 0);
        let scales = ScaleSequence::new(vec![0, 1, 1, 2]).unwrap();
        let w = wavelet_transform(&op, &x, &scales).unwrap();
        assert!(w.block(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn counts() {
        let g = Hypergraph::new(2, vec![vec![0, 1], vec![0, 1]]).unwrap();
        assert_eq!(g.nnz(), 4);
        let c = transform_count(&g, &dyadic_scales(1).unwrap(), 1);
        assert_eq!(c, OperationCount { multiply_adds: 8, subtractions: 2 });
        let s8 = ScaleSequence::new(vec![0, 1, 8]).unwrap();
        let s16 = ScaleSequence::new(vec![0, 1, 16]).unwrap();
        assert_eq!(
            transform_count(&g, &s16, 3).multiply_adds,
            2 * transform_count(&g, &s8, 3).multiply_adds
        );
    }

    #[test]
    fn mismatch() {
        let g = Hypergraph::new(2, vec![vec![0, 1]]).unwrap();
        let op = DiffusionOperator::new(&g);
        let err = wavelet_transform(&op, &SignalMatrix::zeros(3, 1), &ScaleSequence::default());
        assert_eq!(err.unwrap_err(), WaveletError::DimensionMismatch { expected: 2, got: 3 });
    }
}
