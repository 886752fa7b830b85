//! Dense helpers shared by the spectral code paths.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
///
/// Returns `None` when the QR iteration does not converge.
pub fn symmetric_eigen(a: ArrayView2<'_, f64>) -> Option<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    if n == 0 {
        return Some((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    let m = DMatrix::from_fn(n, n, |r, c| 0.5 * (a[[r, c]] + a[[c, r]]));
    let eig = m.try_symmetric_eigen(f64::EPSILON, 10_000)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = Array1::from_iter(order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[[r, dst]] = eig.eigenvectors[(r, src)];
        }
    }
    Some((values, vectors))
}

/// Eigenvalues only, ascending.
pub fn symmetric_eigenvalues(a: ArrayView2<'_, f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Some(Array1::zeros(0));
    }
    let m = DMatrix::from_fn(n, n, |r, c| 0.5 * (a[[r, c]] + a[[c, r]]));
    let values = m.try_symmetric_eigen(f64::EPSILON, 10_000)?.eigenvalues;
    let mut v: Vec<f64> = values.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Some(Array1::from(v))
}

/// `-Σ λ log λ` over the nonnegative part of a spectrum, with `0 log 0 = 0`.
pub fn spectral_entropy(eigenvalues: &[f64]) -> f64 {
    eigenvalues
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.ln())
        .sum()
}
