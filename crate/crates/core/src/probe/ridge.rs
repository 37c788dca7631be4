use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fitted linear probe, expressed on the original (unstandardized) feature
/// scale. Dropped zero-variance features carry weight 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    /// Indices of features removed for having zero variance on the fit rows.
    pub dropped: Vec<usize>,
}

impl RidgeModel {
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict_one(r)).collect()
    }
}

/// Minimizes `‖y − Xw − b‖² + λ‖w‖²` with an unpenalized intercept. The
/// problem is solved on standardized columns and mapped back; columns with
/// zero variance are dropped.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<RidgeModel> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InvalidInput(format!(
            "ridge needs at least 2 rows and one target per row, got {n} rows and {} targets",
            y.len()
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be finite and ≥ 0, got {lambda}")));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("feature rows have different lengths".into()));
    }
    let nf = n as f64;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut stats = Vec::new();
    for j in 0..d {
        let mean = x.iter().map(|r| r[j]).sum::<f64>() / nf;
        let sd = (x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / nf).sqrt();
        if sd > 1e-12 * (1.0 + mean.abs()) && sd.is_finite() {
            kept.push(j);
            stats.push((mean, sd));
        } else {
            dropped.push(j);
        }
    }
    let y_mean = y.iter().sum::<f64>() / nf;
    let mut weights = vec![0.0; d];
    if !kept.is_empty() {
        let z = DMatrix::from_fn(n, kept.len(), |i, k| (x[i][kept[k]] - stats[k].0) / stats[k].1);
        let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);
        let mut a = z.transpose() * &z;
        for k in 0..kept.len() {
            a[(k, k)] += lambda;
        }
        let rhs = z.transpose() * yc;
        // SVD handles the rank-deficient lambda = 0 case with the minimum-norm solution
        let beta = a
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::Numeric(format!("ridge solve failed: {e}")))?;
        for (k, &j) in kept.iter().enumerate() {
            weights[j] = beta[k] / stats[k].1;
        }
    }
    let intercept = y_mean
        - kept
            .iter()
            .enumerate()
            .map(|(k, &j)| weights[j] * stats[k].0)
            .sum::<f64>();
    Ok(RidgeModel {
        weights,
        intercept,
        lambda,
        dropped,
    })
}

/// Coefficient of determination `1 − SS_res/SS_tot`; negative when the
/// prediction is worse than the mean.
pub fn r2_score(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || truth.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "r2 needs two equal-length vectors of at least 2 values, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot <= 1e-300 {
        return Err(Error::Undefined("r2 of a constant target".into()));
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
