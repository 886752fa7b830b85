use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::linalg;

/// Similarity kernel for the Vendi score. Both have unit diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VendiKernel {
    #[default]
    Cosine,
    Rbf { bandwidth: f64 },
}

/// `exp(−Σ λ log λ)` over the eigenvalues of `K / m`, in `[1, m]`.
///
/// For the cosine kernel `K = X̂X̂ᵀ` with unit-norm rows `X̂`, the nonzero
/// spectrum of `K/m` equals that of `X̂ᵀX̂/m`, so the smaller of the two Gram
/// matrices is decomposed.
pub fn vendi_score(features: ArrayView2<'_, f64>, kernel: &VendiKernel) -> Result<f64, EvalError> {
    let m = features.nrows();
    if m == 0 {
        return Err(EvalError::Empty);
    }
    if let Some(((row, _), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(EvalError::InvalidConfig(format!("row {row} has a non-finite entry")));
    }
    let scaled = match *kernel {
        VendiKernel::Cosine => {
            let mut unit = features.to_owned();
            for (row, mut r) in unit.rows_mut().into_iter().enumerate() {
                let norm = r.dot(&r).sqrt();
                if norm == 0.0 {
                    return Err(EvalError::ZeroRow { row });
                }
                r /= norm;
            }
            if unit.ncols() < m {
                unit.t().dot(&unit) / m as f64
            } else {
                unit.dot(&unit.t()) / m as f64
            }
        }
        VendiKernel::Rbf { bandwidth } => {
            if !(bandwidth > 0.0) {
                return Err(EvalError::InvalidConfig("rbf bandwidth must be positive".into()));
            }
            let sq: Vec<f64> = features.rows().into_iter().map(|r| r.dot(&r)).collect();
            let gram = features.dot(&features.t());
            let denom = 2.0 * bandwidth * bandwidth;
            Array2::from_shape_fn((m, m), |(i, j)| {
                if i == j {
                    1.0 / m as f64
                } else {
                    let d2 = (sq[i] + sq[j] - 2.0 * gram[[i, j]]).max(0.0);
                    (-d2 / denom).exp() / m as f64
                }
            })
        }
    };
    let spectrum = linalg::symmetric_eigenvalues(scaled.view()).ok_or(EvalError::EigenSolverFailure)?;
    let score = linalg::spectral_entropy(spectrum.as_slice().expect("contiguous")).exp();
    Ok(score.clamp(1.0, m as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_rows_score_one() {
        let x = Array2::from_shape_fn((6, 3), |(_, c)| c as f64 + 1.0);
        assert!((vendi_score(x.view(), &VendiKernel::Cosine).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_rows_score_m() {
        let x = Array2::<f64>::eye(5) * 3.0;
        assert!((vendi_score(x.view(), &VendiKernel::Cosine).unwrap() - 5.0).abs() < 1e-9);
        // Wider than tall exercises the other Gram orientation.
        let mut wide = Array2::<f64>::zeros((4, 9));
        for i in 0..4 {
            wide[[i, 2 * i]] = 1.0 + i as f64;
        }
        assert!((vendi_score(wide.view(), &VendiKernel::Cosine).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn two_orthogonal_groups() {
        let x = array![[1.0, 0.0], [2.0, 0.0], [0.5, 0.0], [0.0, 1.0], [0.0, 4.0], [0.0, 2.0]];
        assert!((vendi_score(x.view(), &VendiKernel::Cosine).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_row_rejected() {
        let x = array![[1.0, 0.0], [0.0, 0.0]];
        assert_eq!(vendi_score(x.view(), &VendiKernel::Cosine).unwrap_err(), EvalError::ZeroRow { row: 1 });
    }

    #[test]
    fn rbf_limits() {
        let x = array![[0.0, 0.0], [100.0, 0.0], [0.0, 100.0]];
        let far = vendi_score(x.view(), &VendiKernel::Rbf { bandwidth: 1.0 }).unwrap();
        assert!((far - 3.0).abs() < 1e-9);
        let near = vendi_score(x.view(), &VendiKernel::Rbf { bandwidth: 1e6 }).unwrap();
        assert!((near - 1.0).abs() < 1e-6);
        // Zero rows are fine for the RBF kernel.
        assert!(vendi_score(array![[0.0], [1.0]].view(), &VendiKernel::Rbf { bandwidth: 1.0 }).is_ok());
    }
}
