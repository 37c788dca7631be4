mod common;

use common::*;
use phasezoo::nn::{self, build_model};
use phasezoo::Params;
use proptest::prelude::*;

#[test]
fn gradient_matches_central_differences_on_random_nets() {
    let mut rng = rng(20);
    for case in 0..20 {
        let spec = random_net(&mut rng, 500);
        let params: Params = build_model(&spec).unwrap();
        let batch = random_batch(&mut rng, &spec, 16);
        let (_, grad) = nn::loss_and_grad(&params, &spec, batch.view()).unwrap();
        let fd = finite_difference_gradient(&params, &spec, &batch, 1e-5);
        let err = max_relative_error(grad.values(), &fd, 1e-6);
        assert!(err < 1e-4, "case {case} ({spec:?}): relative error {err:e}");
    }
}

#[test]
fn hvp_matches_difference_of_gradients() {
    let mut rng = rng(21);
    for case in 0..10 {
        let spec = random_net(&mut rng, 300);
        let params: Params = build_model(&spec).unwrap();
        let batch = random_batch(&mut rng, &spec, 12);
        let v = random_direction(&mut rng, &params);
        let hv = nn::hvp(&params, &spec, batch.view(), &v).unwrap();
        let eps = 1e-4 * params.norm() / v.norm();
        let fd = nn::hvp_finite_difference(&params, &spec, batch.view(), &v, eps).unwrap();
        let diff: f64 = hv
            .values()
            .iter()
            .zip(fd.values())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let rel = diff / hv.norm().max(1e-12);
        assert!(rel < 1e-3, "case {case}: relative error {rel:e}");
    }
}

#[test]
fn hvp_is_symmetric() {
    let mut rng = rng(22);
    for _ in 0..10 {
        let spec = random_net(&mut rng, 400);
        let params: Params = build_model(&spec).unwrap();
        let batch = random_batch(&mut rng, &spec, 10);
        let u = random_direction(&mut rng, &params);
        let v = random_direction(&mut rng, &params);
        let hu = nn::hvp(&params, &spec, batch.view(), &u).unwrap();
        let hv = nn::hvp(&params, &spec, batch.view(), &v).unwrap();
        let a = v.dot(&hu);
        let b = u.dot(&hv);
        assert!((a - b).abs() <= 1e-8 * a.abs().max(b.abs()).max(1e-12), "{a} vs {b}");
    }
}

#[test]
fn engine_is_pure() {
    let mut rng = rng(23);
    let spec = random_net(&mut rng, 200);
    let params: Params = build_model(&spec).unwrap();
    let batch = random_batch(&mut rng, &spec, 8);
    let v = random_direction(&mut rng, &params);
    let first = nn::hvp(&params, &spec, batch.view(), &v).unwrap();
    let again = nn::hvp(&params, &spec, batch.view(), &v).unwrap();
    assert_eq!(first, again);
    let (l1, g1) = nn::loss_and_grad(&params, &spec, batch.view()).unwrap();
    let (l2, g2) = nn::loss_and_grad(&params, &spec, batch.view()).unwrap();
    assert_eq!(l1.to_bits(), l2.to_bits());
    assert_eq!(g1, g2);
}

#[test]
fn f32_engine_tracks_f64_engine() {
    let mut rng = rng(24);
    let spec = random_net(&mut rng, 200);
    let params: Params = build_model(&spec).unwrap();
    let batch = random_batch(&mut rng, &spec, 8);
    let b32 = nn::Batch::new(
        batch.inputs.iter().map(|&x| x as f32).collect(),
        batch.labels.clone(),
        batch.input_dim,
    )
    .unwrap();
    let l64 = nn::loss(&params, &spec, batch.view()).unwrap();
    let l32 = nn::loss(&params.cast::<f32>(), &spec, b32.view()).unwrap();
    assert!((l64 - l32 as f64).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn gradient_check_holds_for_arbitrary_seeds(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let spec = random_net(&mut rng, 120);
        let params: Params = build_model(&spec).unwrap();
        let batch = random_batch(&mut rng, &spec, 6);
        let (_, grad) = nn::loss_and_grad(&params, &spec, batch.view()).unwrap();
        let fd = finite_difference_gradient(&params, &spec, &batch, 1e-5);
        prop_assert!(max_relative_error(grad.values(), &fd, 1e-6) < 1e-4);
    }
}
