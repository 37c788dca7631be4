mod common;

use common::*;
use nalgebra::{DMatrix, QR};
use phasezoo::landscape::*;
use phasezoo::nn::{build_model, Layout, ModelSpec};
use phasezoo::{Data, Matrix, Params};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A settled random net of 40 to 200 parameters, its data and dense Hessian.
fn curvature_case(seed: u64) -> (ModelSpec, Data, Params, DMatrix<f64>) {
    let mut rng = rng(seed);
    let spec = loop {
        let s = random_net(&mut rng, 200);
        if s.param_count().unwrap() >= 40 {
            break s;
        }
    };
    let batch = random_batch(&mut rng, &spec, 24);
    let data = Data::new(
        batch.inputs.clone(),
        batch.labels.clone(),
        spec.input_dim,
        spec.output_dim,
        phasezoo::nn::Split::Train,
        phasezoo::nn::Generator::Csv,
        seed,
    )
    .unwrap();
    let p0: Params = build_model(&spec).unwrap();
    let p = settle(&p0, &spec, &batch, 50, 0.05);
    let h = dense_hessian(&p, &spec, &batch);
    (spec, data, p, h)
}

#[test]
fn power_iteration_matches_dense_spectrum() {
    for seed in 0..6 {
        let (spec, data, p, h) = curvature_case(100 + seed);
        let obj = MlpLoss::new(&spec, &data).unwrap();
        let est = top_eigenvalue(&obj, p.values(), 5000, 1e-12, seed).unwrap();
        let truth = dominant_eigenvalue(&h);
        let rel = (est.lambda_max - truth).abs() / truth.abs();
        assert!(rel < 1e-3, "seed {seed}: {} vs dense {truth} (rel {rel:e})", est.lambda_max);
    }
}

#[test]
fn hutchinson_trace_matches_dense_trace() {
    for seed in 0..5 {
        let (spec, data, p, h) = curvature_case(200 + seed);
        let obj = MlpLoss::new(&spec, &data).unwrap();
        let truth = h.trace();
        for probe_seed in 0..5 {
            let est = hessian_trace(&obj, p.values(), 1000, probe_seed).unwrap();
            let rel = (est.estimate - truth).abs() / truth.abs();
            assert!(rel < 0.05, "net {seed} probe seed {probe_seed}: {} vs {truth}", est.estimate);
        }
    }
}

#[test]
fn quadratic_curvature_is_exact() {
    let a = Matrix::from_vec(3, 3, vec![4.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, -6.0]).unwrap();
    let q = Quadratic::new(a).unwrap();
    let theta = [0.3, -0.1, 2.0];
    let est = top_eigenvalue(&q, &theta, 1000, 1e-14, 1).unwrap();
    assert!((est.lambda_max + 6.0).abs() < 1e-9, "{}", est.lambda_max);
    // Rademacher probes are exact on a diagonal part and unbiased off it
    let tr = hessian_trace(&q, &theta, 4000, 2).unwrap();
    assert!((tr.estimate - 1.0).abs() < 0.1, "{}", tr.estimate);
}

fn point(x: f64) -> Params {
    Params::new(vec![x], Layout::flat(1).unwrap()).unwrap()
}

#[test]
fn valley_gives_plus_one() {
    // x² on [-1, 1]: endpoint mean 1, curve minimum 0 at t = ½
    let q = Scalar1d {
        f: |x: f64| x * x,
        df: |x: f64| 2.0 * x,
        d2f: |_| 2.0,
    };
    let c = BezierCurve::straight(&point(-1.0), &point(1.0)).unwrap();
    let r = mode_connectivity(&c, &q, 21, TStar::MaxDeviation).unwrap();
    assert_eq!(r.mc, 1.0);
    assert_eq!(r.t_star, 0.5);
}

#[test]
fn double_well_gives_minus_one() {
    // (x²−1)² on [-1, 1]: both endpoints are minima at 0, the curve peaks at 1
    let w = Scalar1d {
        f: |x: f64| (x * x - 1.0).powi(2),
        df: |x: f64| 4.0 * x * (x * x - 1.0),
        d2f: |x: f64| 12.0 * x * x - 4.0,
    };
    let c = BezierCurve::straight(&point(-1.0), &point(1.0)).unwrap();
    let r = mode_connectivity(&c, &w, 21, TStar::MaxDeviation).unwrap();
    assert_eq!(r.mc, -1.0);
    assert_eq!(r.t_star, 0.5);
    // a negative value is a barrier: the path climbs above its endpoints
    assert!(r.curve_losses.iter().any(|&(_, l)| l > r.endpoint_mean_loss));
}

#[test]
fn identical_endpoints_give_zero() {
    let mut rng = rng(5);
    let spec = random_net(&mut rng, 150);
    let batch = random_batch(&mut rng, &spec, 20);
    let data = Data::new(
        batch.inputs.clone(),
        batch.labels.clone(),
        spec.input_dim,
        spec.output_dim,
        phasezoo::nn::Split::Train,
        phasezoo::nn::Generator::Csv,
        0,
    )
    .unwrap();
    let obj = MlpLoss::new(&spec, &data).unwrap();
    let p: Params = build_model(&spec).unwrap();
    let c = BezierCurve::straight(&p, &p).unwrap();
    let r = mode_connectivity(&c, &obj, 21, TStar::MaxDeviation).unwrap();
    assert_eq!(r.mc, 0.0);
    assert!(r.curve_losses.iter().all(|&(_, l)| l == r.endpoint_mean_loss));
}

fn gaussian(rng: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn to_dense(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

fn from_dense(m: &DMatrix<f64>) -> Matrix<f64> {
    Matrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

#[test]
fn cka_self_similarity_is_one() {
    let mut rng = rng(40);
    for _ in 0..10 {
        let x = gaussian(&mut rng, 50, 4);
        let r = cka_similarity(&x, &x).unwrap();
        assert!((r.cka - 1.0).abs() < 1e-9);
    }
}

#[test]
fn cka_is_orthogonal_and_scale_invariant() {
    let mut rng = rng(41);
    for _ in 0..10 {
        let x = gaussian(&mut rng, 60, 5);
        let y = gaussian(&mut rng, 60, 3);
        let base = cka_similarity(&x, &y).unwrap().cka;
        let q = QR::new(to_dense(&gaussian(&mut rng, 5, 5))).q();
        let rotated = from_dense(&(to_dense(&x) * q));
        let scale: f64 = rng.random_range(0.01..100.0);
        let scaled = y.scaled(scale);
        let moved = cka_similarity(&rotated, &scaled).unwrap().cka;
        assert!((moved - base).abs() < 1e-6, "{base} vs {moved}");
    }
}

#[test]
fn independent_gaussians_have_low_cka() {
    let mut rng = rng(42);
    for _ in 0..10 {
        let x = gaussian(&mut rng, 500, 3);
        let y = gaussian(&mut rng, 500, 3);
        let r = cka_similarity(&x, &y).unwrap();
        assert!(r.cka < 0.1, "{}", r.cka);
        assert_eq!(r.n_samples, 500);
    }
}

/// Kernel-space CKA, `tr(KHLH) / √(tr(KHKH) tr(LHLH))`.
fn cka_kernel(x: &Matrix<f64>, y: &Matrix<f64>) -> f64 {
    let n = x.rows();
    let x = to_dense(x);
    let y = to_dense(y);
    let h = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let k = &h * (&x * x.transpose()) * &h;
    let l = &h * (&y * y.transpose()) * &h;
    let hsic = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a * b).trace();
    hsic(&k, &l) / (hsic(&k, &k) * hsic(&l, &l)).sqrt()
}

#[test]
fn cka_matches_kernel_form() {
    let mut rng = rng(43);
    for _ in 0..5 {
        let x = gaussian(&mut rng, 40, 4);
        let mut y = gaussian(&mut rng, 40, 2);
        for r in 0..40 {
            y.set(r, 0, y.get(r, 0) + x.get(r, 1));
        }
        let ours = cka_similarity(&x, &y).unwrap().cka;
        assert!((ours - cka_kernel(&x, &y)).abs() < 1e-10);
    }
}
