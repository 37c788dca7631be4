//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use phasezoo::nn::{self, Activation, Batch, ModelSpec};
use phasezoo::Params;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_net(rng: &mut ChaCha8Rng, max_params: usize) -> ModelSpec {
    loop {
        let activation = if rng.random_bool(0.5) {
            Activation::Relu
        } else {
            Activation::Tanh
        };
        let spec = ModelSpec::new(
            rng.random_range(1..5),
            rng.random_range(1..13),
            rng.random_range(1..4),
            rng.random_range(2..5),
            activation,
            rng.random(),
        );
        if spec.param_count().unwrap() <= max_params {
            return spec;
        }
    }
}

pub fn random_batch(rng: &mut ChaCha8Rng, spec: &ModelSpec, n: usize) -> Batch<f64> {
    let inputs = (0..n * spec.input_dim)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..spec.output_dim)).collect();
    Batch::new(inputs, labels, spec.input_dim).unwrap()
}

pub fn random_direction(rng: &mut ChaCha8Rng, like: &Params) -> Params {
    like.with_values((0..like.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
        .unwrap()
}

/// Central finite differences of the loss, one coordinate at a time. A step
/// near 1e-5 balances round-off against truncation in 64-bit.
pub fn finite_difference_gradient(params: &Params, spec: &ModelSpec, batch: &Batch<f64>, h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.len());
    let mut probe = params.clone();
    for i in 0..params.len() {
        let x = params.values()[i];
        probe.values_mut()[i] = x + h;
        let up = nn::loss(&probe, spec, batch.view()).unwrap();
        probe.values_mut()[i] = x - h;
        let down = nn::loss(&probe, spec, batch.view()).unwrap();
        probe.values_mut()[i] = x;
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Largest elementwise relative error, with `floor` guarding near-zero entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Dense Hessian assembled column by column from `hvp` with basis vectors,
/// then symmetrized.
pub fn dense_hessian(params: &Params, spec: &ModelSpec, batch: &Batch<f64>) -> DMatrix<f64> {
    let m = params.len();
    let mut h = DMatrix::zeros(m, m);
    for j in 0..m {
        let mut e = params.zeros_like();
        e.values_mut()[j] = 1.0;
        let col = nn::hvp(params, spec, batch.view(), &e).unwrap();
        for i in 0..m {
            h[(i, j)] = col.values()[i];
        }
    }
    (&h + h.transpose()) * 0.5
}

pub fn eigenvalues(h: &DMatrix<f64>) -> Vec<f64> {
    SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect()
}

/// Signed eigenvalue of largest magnitude.
pub fn dominant_eigenvalue(h: &DMatrix<f64>) -> f64 {
    eigenvalues(h)
        .into_iter()
        .fold(0.0, |best, v| if v.abs() > best.abs() { v } else { best })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Trains a small net for a few full-batch steps so curvature tests run at a
/// non-initial point.
pub fn settle(params: &Params, spec: &ModelSpec, batch: &Batch<f64>, steps: usize, lr: f64) -> Params {
    let mut p = params.clone();
    for _ in 0..steps {
        let (_, g) = nn::loss_and_grad(&p, spec, batch.view()).unwrap();
        p.axpy(-lr, &g);
    }
    p
}
