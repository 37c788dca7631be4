use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub cka: f64,
    pub n_samples: usize,
}

/// Column-centered copy.
fn centered(x: &Matrix<f64>) -> Matrix<f64> {
    let n = x.rows() as f64;
    let means: Vec<f64> = (0..x.cols())
        .map(|c| (0..x.rows()).map(|r| x.get(r, c)).sum::<f64>() / n)
        .collect();
    Matrix::from_fn(x.rows(), x.cols(), |r, c| x.get(r, c) - means[c])
}

/// `‖AᵀB‖²_F`, which equals `tr(KₕLₕ)` for the centered linear kernels
/// `K = AAᵀ`, `L = BBᵀ` when `A`, `B` are column-centered.
fn hsic_unscaled(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..a.cols() {
        for j in 0..b.cols() {
            let s: f64 = (0..a.rows()).map(|r| a.get(r, i) * b.get(r, j)).sum();
            total += s * s;
        }
    }
    total
}

/// Linear CKA between two representations of the same `n` inputs.
///
/// Computed in feature space: with column-centered `X`, `Y`,
/// `HSIC(K, L) ∝ ‖XᵀY‖²_F`, and the `(n−1)²` factors cancel in the ratio.
pub fn cka_similarity(x: &Matrix<f64>, y: &Matrix<f64>) -> Result<SimilarityReport> {
    if x.rows() != y.rows() {
        return Err(Error::Shape(format!(
            "CKA inputs have {} and {} rows",
            x.rows(),
            y.rows()
        )));
    }
    if x.rows() < 2 {
        return Err(Error::InvalidInput("CKA needs at least 2 samples".into()));
    }
    let xc = centered(x);
    let yc = centered(y);
    let kk = hsic_unscaled(&xc, &xc);
    let ll = hsic_unscaled(&yc, &yc);
    if kk == 0.0 || ll == 0.0 {
        return Err(Error::Undefined("CKA of a zero-variance representation".into()));
    }
    let kl = hsic_unscaled(&xc, &yc);
    let cka = (kl / (kk.sqrt() * ll.sqrt())).clamp(0.0, 1.0);
    if !cka.is_finite() {
        return Err(Error::Numeric("CKA is not finite".into()));
    }
    Ok(SimilarityReport {
        cka,
        n_samples: x.rows(),
    })
}
