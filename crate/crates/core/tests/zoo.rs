use std::fs;
use std::path::Path;
use std::time::SystemTime;

use phasezoo::nn::{Activation, DataSource, ModelSpec};
use phasezoo::train::TrainConfig;
use phasezoo::zoo::*;
use phasezoo::Params;

fn grid(widths: &[usize], batches: &[usize], seeds: &[u64]) -> GridSpec {
    GridSpec {
        widths: widths.to_vec(),
        batch_sizes: batches.to_vec(),
        seeds: seeds.to_vec(),
        base_spec: ModelSpec::new(2, 8, 1, 3, Activation::Relu, 0),
        base_config: TrainConfig {
            epochs: 4,
            checkpoint_every: 2,
            ..TrainConfig::default()
        },
        dataset: DataSource::spirals(90, 60, 3, 0.2, 5),
    }
}

fn small() -> GridSpec {
    grid(&[2, 4, 8], &[8, 16, 32], &[0, 1])
}

fn mtimes(root: &Path) -> Vec<(String, SystemTime)> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_dir() {
            let results = entry.path().join(RESULTS_FILE);
            if let Ok(m) = fs::metadata(&results) {
                out.push((entry.file_name().to_string_lossy().into(), m.modified().unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn worker_count_does_not_change_the_manifest() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_grid(&Zoo::create(a.path(), small()).unwrap(), 1, RunOptions::default()).unwrap();
    let mb = run_grid(&Zoo::create(b.path(), small()).unwrap(), 8, RunOptions::default()).unwrap();
    assert!(ma.is_complete());
    assert_eq!(ma, mb);
    let text = |d: &Path| fs::read(d.join(MANIFEST_FILE)).unwrap();
    assert_eq!(text(a.path()), text(b.path()));
    let za = Zoo::open(a.path()).unwrap();
    let zb = Zoo::open(b.path()).unwrap();
    for cell in za.cells() {
        let pa = za.load_params(&cell, None).unwrap();
        let pb = zb.load_params(&cell, None).unwrap();
        assert_eq!(pa.values(), pb.values(), "{cell}");
    }
}

#[test]
fn interrupted_run_resumes_idempotently() {
    let dir = tempfile::tempdir().unwrap();
    let zoo = Zoo::create(dir.path(), small()).unwrap();
    let partial = run_grid(&zoo, 2, RunOptions { max_cells: Some(7) }).unwrap();
    assert_eq!(partial.incomplete().len(), 11);
    assert!(matches!(partial.require_complete(), Err(phasezoo::Error::IncompleteZoo { .. })));
    let before = mtimes(dir.path());
    assert_eq!(before.len(), 7);

    let zoo = Zoo::open(dir.path()).unwrap();
    let full = run_grid(&zoo, 2, RunOptions::default()).unwrap();
    assert!(full.is_complete());
    let after = mtimes(dir.path());
    for (key, t) in &before {
        let (_, t2) = after.iter().find(|(k, _)| k == key).unwrap();
        assert_eq!(t, t2, "{key} was retrained");
    }

    // a second pass has nothing to do
    let again = run_grid(&zoo, 2, RunOptions::default()).unwrap();
    assert_eq!(again, full);
    assert_eq!(mtimes(dir.path()), after);

    let fresh = tempfile::tempdir().unwrap();
    let reference = run_grid(&Zoo::create(fresh.path(), small()).unwrap(), 1, RunOptions::default()).unwrap();
    assert_eq!(reference, full);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::new(3, 7, 2, 4, Activation::Tanh, 11);
    let p: Params = phasezoo::nn::build_model(&spec).unwrap();
    let q = p.with_values(p.values().iter().map(|v| (*v as f32) as f64).collect()).unwrap();
    save_checkpoint(dir.path(), &q).unwrap();
    let back: Params = load_checkpoint(dir.path()).unwrap();
    let bits = |p: &Params| p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&q));
    assert_eq!(back.layout(), q.layout());
}

#[test]
fn collect_grid_means_over_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid(&[2, 4], &[8, 16], &[0, 1, 2]);
    let m = run_grid(&Zoo::create(dir.path(), g).unwrap(), 1, RunOptions::default()).unwrap();
    let t = collect_grid(&m, "test_acc").unwrap();
    assert_eq!(t.shape(), (2, 2));
    for (i, &w) in t.widths.iter().enumerate() {
        for (j, &b) in t.batch_sizes.iter().enumerate() {
            let accs: Vec<f64> = [0, 1, 2]
                .iter()
                .map(|&s| m.get(w, b, s).unwrap().final_record.as_ref().unwrap().test_acc)
                .collect();
            let mean = accs.iter().sum::<f64>() / 3.0;
            assert!((t.get(i, j).unwrap() - mean).abs() < 1e-15);
        }
    }
    // pairwise fields stay missing until metrics are computed
    assert!(collect_grid(&m, "mc").unwrap().present().next().is_none());
    let csv = grid_to_csv(&t);
    assert_eq!(parse_grid_csv::<f64>(&csv).unwrap(), t);
}
