//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits 0 even when a criterion fails so the workspace test run stays
//! usable; set `ACCEPTANCE_STRICT=1` to turn any FAIL into a non-zero exit.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::{DMatrix, QR};
use phasezoo::downstream::*;
use phasezoo::hpo::*;
use phasezoo::landscape::*;
use phasezoo::nn::{self, build_model, Activation, DataSource, Generator, ModelSpec, Split};
use phasezoo::phase::*;
use phasezoo::probe::*;
use phasezoo::train::{evaluate, train, TrainConfig};
use phasezoo::zoo::*;
use phasezoo::{Data, Error, Matrix, Params};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn bits(p: &Params) -> Vec<u64> {
    p.values().iter().map(|v| v.to_bits()).collect()
}

fn batch_data(batch: &nn::Batch<f64>, spec: &ModelSpec) -> Data {
    Data::new(
        batch.inputs.clone(),
        batch.labels.clone(),
        spec.input_dim,
        spec.output_dim,
        Split::Train,
        Generator::Csv,
        0,
    )
    .unwrap()
}

fn gradient_oracle() -> Check {
    let start = Instant::now();
    let mut rng = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let spec = random_net(&mut rng, 500);
        let p: Params = build_model(&spec).unwrap();
        let batch = random_batch(&mut rng, &spec, 16);
        let (_, g) = nn::loss_and_grad(&p, &spec, batch.view()).unwrap();
        let fd = finite_difference_gradient(&p, &spec, &batch, 1e-5);
        worst = worst.max(max_relative_error(g.values(), &fd, 1e-6));
    }
    let elapsed = start.elapsed();
    let detail = format!("max rel err {worst:.2e} on 20 nets in {elapsed:.2?}");
    ensure(worst < 1e-4 && elapsed < Duration::from_secs(30), &detail)?;
    Ok(detail)
}

fn hvp_oracle() -> Check {
    let mut rng = rng(2);
    let (mut worst_fd, mut worst_sym): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let spec = random_net(&mut rng, 300);
        let p: Params = build_model(&spec).unwrap();
        let batch = random_batch(&mut rng, &spec, 12);
        let v = random_direction(&mut rng, &p);
        let u = random_direction(&mut rng, &p);
        let hv = nn::hvp(&p, &spec, batch.view(), &v).unwrap();
        let eps = 1e-4 * p.norm() / v.norm();
        let fd = nn::hvp_finite_difference(&p, &spec, batch.view(), &v, eps).unwrap();
        let diff = hv.values().iter().zip(fd.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst_fd = worst_fd.max(diff / hv.norm().max(1e-12));
        let hu = nn::hvp(&p, &spec, batch.view(), &u).unwrap();
        let (a, b) = (v.dot(&hu), u.dot(&hv));
        worst_sym = worst_sym.max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
    }
    let detail = format!("fd rel err {worst_fd:.2e}, symmetry gap {worst_sym:.2e}");
    ensure(worst_fd < 1e-3 && worst_sym < 1e-8, &detail)?;
    Ok(detail)
}

fn dense_hessian_oracle() -> Check {
    let start = Instant::now();
    let (mut worst_eig, mut worst_trace): (f64, f64) = (0.0, 0.0);
    for seed in 0..5u64 {
        let mut rng = rng(200 + seed);
        let spec = loop {
            let s = random_net(&mut rng, 200);
            if s.param_count().unwrap() >= 40 {
                break s;
            }
        };
        let batch = random_batch(&mut rng, &spec, 24);
        let data = batch_data(&batch, &spec);
        let p = settle(&build_model(&spec).unwrap(), &spec, &batch, 50, 0.05);
        let h = dense_hessian(&p, &spec, &batch);
        let obj = MlpLoss::new(&spec, &data).unwrap();
        let lam = dominant_eigenvalue(&h);
        let est = top_eigenvalue(&obj, p.values(), 5000, 1e-12, seed).unwrap();
        worst_eig = worst_eig.max((est.lambda_max - lam).abs() / lam.abs());
        let tr = h.trace();
        for probe_seed in 0..5 {
            let t = hessian_trace(&obj, p.values(), 1000, probe_seed).unwrap();
            worst_trace = worst_trace.max((t.estimate - tr).abs() / tr.abs());
        }
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "eigenvalue rel err {worst_eig:.2e}, trace rel err {:.1}% over 5 nets x 5 probe seeds in {elapsed:.2?}",
        100.0 * worst_trace
    );
    ensure(worst_eig < 1e-3 && worst_trace < 0.05 && elapsed < Duration::from_secs(120), &detail)?;
    Ok(detail)
}

fn scalar_point(x: f64) -> Params {
    Params::new(vec![x], nn::Layout::flat(1).unwrap()).unwrap()
}

fn mode_connectivity_cases() -> Check {
    let line = BezierCurve::straight(&scalar_point(-1.0), &scalar_point(1.0)).unwrap();
    let valley = Scalar1d {
        f: |x: f64| x * x,
        df: |x: f64| 2.0 * x,
        d2f: |_| 2.0,
    };
    let well = Scalar1d {
        f: |x: f64| (x * x - 1.0).powi(2),
        df: |x: f64| 4.0 * x * (x * x - 1.0),
        d2f: |x: f64| 12.0 * x * x - 4.0,
    };
    let v = mode_connectivity(&line, &valley, 21, TStar::MaxDeviation).unwrap();
    let w = mode_connectivity(&line, &well, 21, TStar::MaxDeviation).unwrap();
    ensure(v.mc == 1.0, format!("valley mc {}", v.mc))?;
    ensure(w.mc == -1.0, format!("double-well mc {}", w.mc))?;
    // a barrier: some point on the path sits above the endpoint mean
    let barrier = w.curve_losses.iter().any(|&(_, l)| l > w.endpoint_mean_loss);
    ensure(barrier && w.mc < 0.0, "negative mc without a barrier")?;

    let mut rng = rng(4);
    let spec = random_net(&mut rng, 150);
    let batch = random_batch(&mut rng, &spec, 20);
    let data = batch_data(&batch, &spec);
    let obj = MlpLoss::new(&spec, &data).unwrap();
    let p: Params = build_model(&spec).unwrap();
    let same = mode_connectivity(&BezierCurve::straight(&p, &p).unwrap(), &obj, 21, TStar::MaxDeviation).unwrap();
    ensure(same.mc == 0.0, format!("mc(theta, theta) = {}", same.mc))?;
    Ok(format!("valley {}, double well {}, identical endpoints {}", v.mc, w.mc, same.mc))
}

fn gaussian(rng: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn cka_properties() -> Check {
    let mut rng = rng(5);
    let (mut self_gap, mut inv_gap, mut indep_max): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..10 {
        let x = gaussian(&mut rng, 80, 4);
        let y = gaussian(&mut rng, 80, 3);
        self_gap = self_gap.max((cka_similarity(&x, &x).unwrap().cka - 1.0).abs());
        let base = cka_similarity(&x, &y).unwrap().cka;
        let q = QR::new(DMatrix::from_row_slice(4, 4, gaussian(&mut rng, 4, 4).data())).q();
        let xq = DMatrix::from_row_slice(80, 4, x.data()) * q;
        let xq = Matrix::from_fn(80, 4, |r, c| xq[(r, c)]);
        let c: f64 = rng.random_range(0.01..100.0);
        inv_gap = inv_gap.max((cka_similarity(&xq, &y.scaled(c)).unwrap().cka - base).abs());
        inv_gap = inv_gap.max((cka_similarity(&x, &xq).unwrap().cka - 1.0).abs());
        let a = gaussian(&mut rng, 500, 3);
        let b = gaussian(&mut rng, 500, 3);
        indep_max = indep_max.max(cka_similarity(&a, &b).unwrap().cka);
    }
    let detail = format!("self {self_gap:.1e}, invariance {inv_gap:.1e}, independent max {indep_max:.3}");
    ensure(self_gap <= 1e-9 && inv_gap <= 1e-6 && indep_max < 0.1, &detail)?;
    Ok(detail)
}

fn brute_force(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                go(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    best
}

fn hungarian_oracle() -> Check {
    let mut rng = rng(6);
    for case in 0..100 {
        let n = 1 + case % 6;
        let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(0..20) as f64).collect()).collect();
        let (_, total) = hungarian(&cost).unwrap();
        let best = brute_force(&cost);
        ensure(total == best, format!("case {case}: {total} vs brute force {best}"))?;
    }
    for seed in 0..5 {
        let spec = ModelSpec::new(2, 16, 3, 3, Activation::Relu, seed);
        let theta: Params = build_model(&spec).unwrap();
        let pi = PermutationMap {
            layers: (0..3)
                .map(|_| {
                    let mut p: Vec<usize> = (0..16).collect();
                    p.shuffle(&mut rng);
                    p
                })
                .collect(),
        };
        let moved = permute(&theta, &spec, &pi).unwrap();
        let (found, _) = align_permutations(&theta, &moved, &spec).unwrap();
        let recovered = pi.layers.iter().zip(&found.layers).all(|(p, q)| q.iter().enumerate().all(|(i, &j)| p[j] == i));
        ensure(recovered, format!("planted permutation {seed} not recovered"))?;
        let avg = average_aligned(&[theta.clone(), moved], &spec).unwrap();
        ensure(bits(&avg) == bits(&theta), "aligned average differs from theta")?;
    }
    Ok("100 matrices up to 6x6 exact; 5 planted permutations recovered bit-for-bit".into())
}

fn small_grid() -> GridSpec {
    GridSpec {
        widths: vec![2, 4, 8],
        batch_sizes: vec![8, 16, 32],
        seeds: vec![0, 1],
        base_spec: ModelSpec::new(2, 8, 1, 3, Activation::Relu, 0),
        base_config: TrainConfig {
            epochs: 4,
            checkpoint_every: 2,
            ..TrainConfig::default()
        },
        dataset: DataSource::spirals(90, 60, 3, 0.2, 5),
    }
}

fn determinism() -> Check {
    let data: phasezoo::Splits = DataSource::spirals(200, 100, 3, 0.2, 1).build().unwrap();
    let spec = ModelSpec::new(2, 16, 2, 3, Activation::Tanh, 3);
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let a = train(&spec, &data, &cfg).unwrap();
    let b = train(&spec, &data, &cfg).unwrap();
    ensure(a.history == b.history, "replayed histories differ")?;
    ensure(a.checkpoints.iter().zip(&b.checkpoints).all(|(x, y)| x.0 == y.0 && bits(&x.1) == bits(&y.1)), "replayed checkpoints differ")?;

    let d1 = tempfile::tempdir().unwrap();
    let d8 = tempfile::tempdir().unwrap();
    let m1 = run_grid(&Zoo::create(d1.path(), small_grid()).unwrap(), 1, RunOptions::default()).unwrap();
    let m8 = run_grid(&Zoo::create(d8.path(), small_grid()).unwrap(), 8, RunOptions::default()).unwrap();
    let read = |d: &Path| std::fs::read(d.join(MANIFEST_FILE)).unwrap();
    ensure(m1 == m8 && read(d1.path()) == read(d8.path()), "manifests differ between 1 and 8 workers")?;

    let ck = tempfile::tempdir().unwrap();
    let p = a.final_params();
    let q = p.with_values(p.values().iter().map(|v| *v as f32 as f64).collect()).unwrap();
    save_checkpoint(ck.path(), &q).unwrap();
    let back: Params = load_checkpoint(ck.path()).unwrap();
    ensure(bits(&back) == bits(&q), "checkpoint round trip is not bit-exact")?;

    let dr = tempfile::tempdir().unwrap();
    let zoo = Zoo::create(dr.path(), small_grid()).unwrap();
    let partial = run_grid(&zoo, 2, RunOptions { max_cells: Some(5) }).unwrap();
    ensure(partial.incomplete().len() == 13, "interruption left the wrong number of cells")?;
    let stamp = |k: &str| std::fs::metadata(dr.path().join(k).join(RESULTS_FILE)).unwrap().modified().unwrap();
    let done: Vec<String> = partial.cells.iter().filter(|(_, e)| e.cell.status == CellStatus::Done).map(|(k, _)| k.clone()).collect();
    let before: Vec<_> = done.iter().map(|k| stamp(k)).collect();
    let resumed = run_grid(&zoo, 2, RunOptions::default()).unwrap();
    let again = run_grid(&zoo, 2, RunOptions::default()).unwrap();
    let after: Vec<_> = done.iter().map(|k| stamp(k)).collect();
    ensure(before == after, "resume retrained finished cells")?;
    ensure(resumed == m1 && again == m1, "resumed zoo differs from an uninterrupted one")?;
    Ok("replay, 1 vs 8 workers, checkpoint round trip and resume all identical".into())
}

/// The 5 x 5 x 3 spirals zoo with metrics, shared by the phase, HPO and
/// downstream criteria.
struct Desk {
    _dir: tempfile::TempDir,
    zoo: Zoo,
    manifest: ZooManifest,
    elapsed: Duration,
}

fn desk_base() -> (ModelSpec, TrainConfig, DataSource) {
    (
        ModelSpec::new(2, 16, 2, 3, Activation::Relu, 0),
        TrainConfig {
            epochs: 30,
            peak_lr: 0.1,
            ..TrainConfig::default()
        },
        DataSource::spirals(300, 600, 3, 0.15, 7),
    )
}

fn desk() -> Desk {
    let (base_spec, base_config, dataset) = desk_base();
    let grid = GridSpec {
        widths: vec![4, 8, 16, 32, 64],
        batch_sizes: vec![4, 8, 16, 32, 64],
        seeds: vec![0, 1, 2],
        base_spec,
        base_config,
        dataset,
    };
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let zoo = Zoo::create(dir.path(), grid).unwrap();
    run_grid(&zoo, workers(), RunOptions::default()).unwrap();
    let manifest = compute_zoo_metrics(&zoo, &MetricOptions::default(), workers()).unwrap();
    Desk {
        _dir: dir,
        zoo,
        manifest,
        elapsed: start.elapsed(),
    }
}

/// Thresholds fitted to quantile-bootstrapped labels, as `phase fit` does
/// without annotations.
fn fitted_thresholds(m: &ZooManifest) -> (PhaseThresholds, f64) {
    let records: Vec<MetricRecord> = group_records(m).present().map(|(_, _, r)| r.clone()).collect();
    let (boot, labels) = bootstrap_labels(&records).unwrap();
    match fit_thresholds(&records, &labels, &ThresholdBounds::default()) {
        Ok(f) => (f.thresholds, f.train_accuracy),
        Err(Error::Coverage { .. }) => (boot, tree_accuracy(&records, &labels, &boot)),
        Err(e) => panic!("{e}"),
    }
}

fn phase_grid_reproduction(d: &Desk) -> Check {
    ensure(d.manifest.is_complete(), "desk zoo incomplete")?;
    let (t, fit_acc) = fitted_thresholds(&d.manifest);
    let phases = phase_grid(&d.manifest, &t).table;
    let distinct: BTreeSet<PhaseLabel> = phases.present().map(|(_, _, p)| *p).collect();
    let acc = collect_field(&d.manifest, GridField::TestAcc).unwrap();
    let loss = collect_field(&d.manifest, GridField::TrainLoss).unwrap();
    let best = acc.present().map(|(_, _, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    let top: Vec<(usize, usize)> = acc.present().filter(|(_, _, v)| **v >= best - 0.02).map(|(i, j, _)| (i, j)).collect();
    let contained = top.iter().all(|&(i, j)| *loss.get(i, j).unwrap() <= t.tau_loss);
    let names: Vec<&str> = distinct.iter().map(|p| p.token()).collect();
    let detail = format!(
        "{} phases [{}], fit accuracy {fit_acc:.2}, {} top cells all below tau_loss {:.3}: {contained}, zoo + metrics in {:.1?} on {} worker(s)",
        distinct.len(),
        names.join(" "),
        top.len(),
        t.tau_loss,
        d.elapsed,
        workers()
    );
    ensure(distinct.len() >= 3 && contained && d.elapsed < Duration::from_secs(600), &detail)?;
    Ok(detail)
}

fn hpo_direction(d: &Desk) -> Check {
    let (t, _) = fitted_thresholds(&d.manifest);
    let out = run_hpo_experiment(&d.manifest, &t, &HpoOptions::default()).unwrap();
    let (r, a) = (&out.random, &out.phase_aware);
    ensure(r.trials + r.skipped == 50, "expected 50 paired trials")?;

    let widths = [2, 4, 8, 16, 32];
    let batches = [8, 16, 32, 64];
    let acc = GridTable::from_fn(&widths, &batches, |i, j| Some(0.5 + 0.05 * i as f64 + 0.01 * j as f64));
    let phases = GridTable::from_fn(&widths, &batches, |i, _| Some(if i == 4 { PhaseLabel::II } else { PhaseLabel::I }));
    let ex = run_hpo_tables(&acc, &phases, &HpoOptions { exhaustive: true, ..HpoOptions::default() }).unwrap();
    let detail = format!(
        "desk random {:.4} +- {:.4}, phase-aware {:.4} +- {:.4}; synthetic exhaustive {:.4} vs {:.4}",
        r.mean_gain, r.std_gain, a.mean_gain, a.std_gain, ex.random.mean_gain, ex.phase_aware.mean_gain
    );
    ensure(a.mean_gain >= r.mean_gain && ex.phase_aware.mean_gain > ex.random.mean_gain, &detail)?;
    Ok(detail)
}

fn probe_direction() -> Check {
    let (base_spec, base_config, dataset) = desk_base();
    let grid = GridSpec {
        widths: vec![2, 3, 4, 6, 8, 16, 32, 64],
        batch_sizes: vec![4, 6, 8, 12, 16, 24, 32, 64],
        seeds: vec![0, 1, 2],
        base_spec,
        base_config,
        dataset,
    };
    let dir = tempfile::tempdir().unwrap();
    let zoo = Zoo::create(dir.path(), grid).unwrap();
    let m = run_grid(&zoo, workers(), RunOptions::default()).unwrap();
    ensure(m.is_complete(), "probe zoo incomplete")?;
    let data = collect_probe_data(&zoo, &m, ProbeTarget::TestAcc, workers()).unwrap();
    let opts = ProbeOptions::default();
    let r2 = run_probe(&data, &opts).unwrap().r2_test;
    let perm: Vec<f64> = (0..20).map(|s| run_probe(&data.permuted(s), &opts).unwrap().r2_test).collect();
    let perm_mean = perm.iter().sum::<f64>() / perm.len() as f64;
    let detail = format!("held-out R2 {r2:.3} on {} models, permuted-target mean R2 {perm_mean:.3}", data.rows.len());
    ensure(r2 > 0.3 && perm_mean <= 0.05, &detail)?;
    Ok(detail)
}

fn downstream_sanity(d: &Desk) -> Check {
    let pruned = downstream_grid(&d.zoo, &DownstreamMethod::Prune { sparsity: 0.0 }, workers()).unwrap();
    ensure(pruned.failures.is_empty() && pruned.table == pruned.base, "sparsity 0 changed the accuracy grid")?;

    let splits = d.zoo.splits().unwrap();
    let cell = d.zoo.cells()[0];
    let p = d.zoo.load_params(&cell, None).unwrap();
    let spec = d.zoo.grid().model_spec(&cell);
    let (_, single) = evaluate(&p, &spec, &splits.test).unwrap();
    let ens = ensemble_accuracy(&[p.clone(), p.clone(), p], &spec, &splits.test).unwrap();
    ensure(ens == single, format!("ensemble of copies {ens} vs single {single}"))?;

    // hottest row of the desk grid, ten seeds, a checkpoint every epoch
    let (base_spec, base_config, dataset) = desk_base();
    let grid = GridSpec {
        widths: vec![4, 8, 16, 32, 64],
        batch_sizes: vec![4],
        seeds: (0..10).collect(),
        base_spec,
        base_config: TrainConfig {
            checkpoint_every: 1,
            ..base_config
        },
        dataset,
    };
    let dir = tempfile::tempdir().unwrap();
    let zoo = Zoo::create(dir.path(), grid).unwrap();
    run_grid(&zoo, workers(), RunOptions::default()).unwrap();
    let avg = downstream_grid(&zoo, &DownstreamMethod::AvgEpochs { last_k: 5 }, workers()).unwrap();
    ensure(avg.failures.is_empty(), "epoch averaging failed on some cells")?;
    let mut per_seed = [0.0; 10];
    for r in &avg.records {
        per_seed[r.seeds[0] as usize] += r.delta_vs_base / 5.0;
    }
    let improved = per_seed.iter().filter(|v| **v > 0.0).count();
    let tied = per_seed.iter().filter(|v| **v == 0.0).count();
    let detail = format!(
        "prune(0) unchanged, ensemble of copies equal; epoch averaging (last 5) improves {improved}/10 seeds ({tied} tied), mean delta {:+.4}",
        per_seed.iter().sum::<f64>() / 10.0
    );
    ensure(improved >= 6, &detail)?;
    Ok(detail)
}

fn threshold_fitting() -> Check {
    let truth = PhaseThresholds {
        tau_loss: 0.3,
        tau_mc: -0.1,
        tau_cka: 0.8,
        tau_trace: 40.0,
    };
    let mut rng = rng(12);
    let mut side = |cut: f64, lo: f64, hi: f64| {
        if rng.random_bool(0.5) {
            rng.random_range(lo..cut - 0.02)
        } else {
            rng.random_range(cut + 0.02..hi)
        }
    };
    let records: Vec<MetricRecord> = (0..100)
        .map(|_| MetricRecord {
            train_loss: side(truth.tau_loss, 0.0, 2.0),
            test_acc: 0.5,
            generalization_gap: 0.1,
            lambda_max: 1.0,
            hessian_trace: side(truth.tau_trace, 1.0, 100.0),
            mc: side(truth.tau_mc, -1.0, 0.5),
            cka: side(truth.tau_cka, 0.0, 1.0),
            cell: None,
        })
        .collect();
    let labels: Vec<PhaseLabel> = records.iter().map(|r| classify(r, &truth)).collect();
    let fit = fit_thresholds(&records, &labels, &ThresholdBounds::default()).unwrap();
    let mut shuffled: Vec<PhaseLabel> = (0..100).map(|i| PhaseLabel::ALL[i % 5]).collect();
    shuffled.shuffle(&mut common::rng(13));
    let perm = fit_thresholds(&records, &shuffled, &ThresholdBounds::default()).unwrap();
    let detail = format!(
        "separable accuracy {:.2}, permuted accuracy {:.2} (low confidence: {})",
        fit.train_accuracy, perm.train_accuracy, perm.low_confidence
    );
    ensure(fit.train_accuracy == 1.0 && perm.low_confidence, &detail)?;
    Ok(detail)
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let (tag, detail, ok) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("{tag} {id:>2} {name}: {detail}");
    ok
}

fn main() {
    // built on first use by the criteria that share it
    let shared = std::cell::OnceCell::new();
    let get_desk = || shared.get_or_init(desk);
    let results = [
        run(1, "gradient oracle", gradient_oracle),
        run(2, "hvp oracle", hvp_oracle),
        run(3, "dense hessian oracle", dense_hessian_oracle),
        run(4, "mode connectivity cases", mode_connectivity_cases),
        run(5, "cka properties", cka_properties),
        run(6, "hungarian oracle", hungarian_oracle),
        run(7, "determinism and persistence", determinism),
        run(8, "phase grid", || phase_grid_reproduction(get_desk())),
        run(9, "hpo direction", || hpo_direction(get_desk())),
        run(10, "probe direction", probe_direction),
        run(11, "downstream sanity", || downstream_sanity(get_desk())),
        run(12, "threshold fitting", threshold_fitting),
    ];
    let passed = results.iter().filter(|ok| **ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed < results.len() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
