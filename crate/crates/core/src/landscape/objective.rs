use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::engine::{hvp_slice, logits_slice, loss_and_grad_slice, loss_slice};
use crate::nn::{Dataset, ModelSpec};

/// A twice-differentiable scalar loss over a flat parameter vector.
///
/// Landscape metrics only need these three oracles, so they run unchanged on
/// networks and on closed-form surrogates.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn loss(&self, theta: &[f64]) -> Result<f64>;
    fn loss_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
    fn hvp(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>>;
}

/// Mean cross-entropy of an MLP over a fixed dataset.
#[derive(Clone, Copy, Debug)]
pub struct MlpLoss<'a> {
    pub spec: &'a ModelSpec,
    pub data: &'a Dataset<f64>,
}

impl<'a> MlpLoss<'a> {
    pub fn new(spec: &'a ModelSpec, data: &'a Dataset<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidInput("landscape data is empty".into()));
        }
        if data.input_dim() != spec.input_dim {
            return Err(Error::Shape(format!(
                "data has {} input features, model expects {}",
                data.input_dim(),
                spec.input_dim
            )));
        }
        Ok(MlpLoss { spec, data })
    }

    pub fn logits(&self, theta: &[f64]) -> Result<Matrix<f64>> {
        logits_slice(theta, self.spec, self.data.inputs(), self.data.len())
    }
}

impl Objective for MlpLoss<'_> {
    fn dim(&self) -> usize {
        self.spec.param_count().unwrap_or(0)
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        loss_slice(theta, self.spec, self.data.inputs(), self.data.labels()).map(|(l, _)| l)
    }

    fn loss_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        loss_and_grad_slice(theta, self.spec, self.data.inputs(), self.data.labels())
            .map(|(l, _, g)| (l, g))
    }

    fn hvp(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        hvp_slice(theta, self.spec, self.data.inputs(), self.data.labels(), v)
    }
}

/// `½ θᵀAθ` for a symmetric matrix `A` (row-major).
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub a: Matrix<f64>,
}

impl Quadratic {
    pub fn new(a: Matrix<f64>) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::Shape("quadratic form must be square".into()));
        }
        Ok(Quadratic { a })
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.a.rows())
            .map(|i| self.a.row(i).iter().zip(v).map(|(x, y)| x * y).sum())
            .collect()
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        Ok(0.5 * self.apply(theta).iter().zip(theta).map(|(x, y)| x * y).sum::<f64>())
    }

    fn loss_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let g = self.apply(theta);
        let l = 0.5 * g.iter().zip(theta).map(|(x, y)| x * y).sum::<f64>();
        Ok((l, g))
    }

    fn hvp(&self, _theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply(v))
    }
}

/// A one-dimensional loss given by closures for value, slope and curvature.
pub struct Scalar1d<F, G, H> {
    pub f: F,
    pub df: G,
    pub d2f: H,
}

impl<F, G, H> Objective for Scalar1d<F, G, H>
where
    F: Fn(f64) -> f64 + Sync,
    G: Fn(f64) -> f64 + Sync,
    H: Fn(f64) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        1
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        Ok((self.f)(theta[0]))
    }

    fn loss_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok(((self.f)(theta[0]), vec![(self.df)(theta[0])]))
    }

    fn hvp(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![(self.d2f)(theta[0]) * v[0]])
    }
}
