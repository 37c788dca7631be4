use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn phasezoo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasezoo"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let last = stdout.lines().last().expect("summary line");
    serde_json::from_str(last).expect("summary line is JSON")
}

fn config(widths: &[usize], batches: &[usize], seeds: &[u64], epochs: usize) -> Value {
    json!({
        "zoo": "zoo",
        "grid": {
            "widths": widths,
            "batch_sizes": batches,
            "seeds": seeds,
            "base_spec": {
                "input_dim": 2, "hidden_width": 8, "num_hidden_layers": 1,
                "output_dim": 3, "activation": "relu", "seed": 0
            },
            "base_config": {
                "epochs": epochs, "batch_size": 16, "peak_lr": 0.1, "momentum": 0.9,
                "weight_decay": 5e-4, "warmup_fraction": 0.3, "seed": 0
            },
            "dataset": { "generator": "spirals", "n_train": 90, "n_test": 90, "classes": 3, "seed": 5 }
        },
        "metrics": {
            "samples": 60,
            "curvature": { "max_iters": 30, "probes": 10 },
            "pairs": { "bezier": { "steps": 20 }, "t_grid": 11 }
        }
    })
}

fn write_config(dir: &Path, cfg: &Value) {
    fs::write(dir.join("cfg.json"), serde_json::to_string_pretty(cfg).unwrap()).unwrap();
}

#[test]
fn plan_reports_cell_count() {
    let dir = tempfile::tempdir().unwrap();
    let eight: Vec<usize> = (1..=8).map(|i| 4 * i).collect();
    write_config(dir.path(), &config(&eight, &eight, &[0, 1, 2], 2));
    let out = phasezoo(dir.path(), &["--config", "cfg.json", "zoo", "plan"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("192 cells planned"));
    assert_eq!(summary(&out)["cells"], 192);
}

#[test]
fn export_on_empty_zoo_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &config(&[4, 8], &[8], &[0], 2));
    let out = phasezoo(dir.path(), &["--config", "cfg.json", "export", "grid", "--field", "test_acc"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(summary(&out)["incomplete_cells"].as_array().unwrap().len(), 2);
    let out = phasezoo(dir.path(), &["--zoo", "nowhere", "export", "grid", "--field", "test_acc"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn invalid_config_exits_2_with_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&[4], &[8], &[0], 2);
    cfg["grid"]["base_config"]["epochs"] = json!("many");
    write_config(dir.path(), &cfg);
    let out = phasezoo(dir.path(), &["--config", "cfg.json", "zoo", "plan"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.base_config.epochs"));

    let mut cfg = config(&[4], &[8], &[0], 2);
    cfg["metrics"]["curvature"]["probez"] = json!(3);
    write_config(dir.path(), &cfg);
    let out = phasezoo(dir.path(), &["--config", "cfg.json", "zoo", "plan"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("metrics.curvature.probez"));

    let cfg = config(&[8, 4], &[8], &[0], 2);
    write_config(dir.path(), &cfg);
    let out = phasezoo(dir.path(), &["--config", "cfg.json", "zoo", "plan"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn toml_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
zoo = "zoo"
[grid]
widths = [4, 8]
batch_sizes = [8]
seeds = [0]
[grid.base_spec]
input_dim = 2
hidden_width = 8
num_hidden_layers = 1
output_dim = 3
activation = "relu"
seed = 0
[grid.base_config]
epochs = 2
batch_size = 8
peak_lr = 0.1
momentum = 0.9
weight_decay = 0.0
warmup_fraction = 0.3
seed = 0
[grid.dataset]
generator = "spirals"
n_train = 30
n_test = 30
classes = 3
seed = 1
"#;
    fs::write(dir.path().join("cfg.toml"), text).unwrap();
    let out = phasezoo(dir.path(), &["--config", "cfg.toml", "zoo", "plan"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(summary(&out)["cells"], 2);
    fs::write(dir.path().join("bad.toml"), text.replace("seeds = [0]", "seeds = [0]\nseedz = 1")).unwrap();
    let out = phasezoo(dir.path(), &["--config", "bad.toml", "zoo", "plan"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.seedz"));
}

#[test]
fn interrupted_run_resumes() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &config(&[4, 8], &[8, 16], &[0], 2));
    let out = phasezoo(dir.path(), &["--config", "cfg.json", "zoo", "run", "--max-cells", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(summary(&out)["incomplete_cells"].as_array().unwrap().len(), 3);
    let out = phasezoo(dir.path(), &["--config", "cfg.json", "zoo", "run"]);
    assert!(out.status.success());
    assert_eq!(summary(&out)["done"], 4);
}

#[test]
fn full_pipeline_writes_seven_panels_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let w = [4, 8, 16, 32, 64];
    let b = [4, 8, 16, 32, 64];
    write_config(dir.path(), &config(&w, &b, &[0, 1, 2], 4));
    let cfg = ["--config", "cfg.json"];
    let step = |args: &[&str]| {
        let all: Vec<&str> = cfg.iter().chain(args).copied().collect();
        let out = phasezoo(dir.path(), &all);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        summary(&out)
    };
    step(&["zoo", "plan"]);
    step(&["zoo", "run"]);
    step(&["metrics", "compute"]);
    step(&["phase", "fit"]);
    let classified = step(&["phase", "classify"]);
    assert!(classified["phases"].as_object().is_some());
    let exported = step(&["export", "grid", "--field", "all"]);
    assert_eq!(exported["files"].as_array().unwrap().len(), 7);
    let grids = dir.path().join("zoo/grids");
    for f in ["train_loss", "test_acc", "ggap", "lambda_max", "trace", "mc", "cka"] {
        let text = fs::read_to_string(grids.join(format!("{f}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 6, "{f}");
        assert!(text.starts_with("width,4,8,16,32,64"));
    }

    let read = |p: &str| fs::read(dir.path().join("zoo").join(p)).unwrap();
    let before = (read("grids/test_acc.csv"), read("provenance.json"), read("phase_thresholds.json"));
    step(&["phase", "fit"]);
    step(&["export", "grid", "--field", "all"]);
    let after = (read("grids/test_acc.csv"), read("provenance.json"), read("phase_thresholds.json"));
    assert!(before == after, "rerun changed outputs");

    let prov: Value = serde_json::from_slice(&read("provenance.json")).unwrap();
    let entry = &prov["export grid"];
    assert_eq!(entry["inputs"]["manifest"].as_str().unwrap().len(), 64);
    assert_eq!(entry["config"]["grid"]["widths"], json!(w));

    let hpo = step(&["hpo", "run"]);
    assert_eq!(hpo["trials"], 50);
    let pruned = step(&["downstream", "prune", "--sparsity", "0"]);
    assert!(pruned["mean_delta_vs_base"].as_f64().unwrap().abs() < 1e-12);
    step(&["downstream", "ensemble"]);
    let probe = step(&["probe", "run", "--target", "test_acc"]);
    assert!(probe["r2_test"]["test_acc"].is_number());
    assert!(dir.path().join("zoo/probe_report.json").exists());
    assert!(dir.path().join("zoo/downstream/prune.json").exists());
}

#[test]
fn metric_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &config(&[4], &[16], &[0, 1], 2));
    let run = |args: &[&str]| {
        let mut full = vec!["--config", "cfg.json"];
        full.extend_from_slice(args);
        let out = phasezoo(dir.path(), &full);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["zoo", "run"]);
    run(&["metrics", "compute", "--samples", "40", "--probes", "4", "--mc-argmin"]);
    let prov: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("zoo/provenance.json")).unwrap()).unwrap();
    let metrics = &prov["metrics compute"]["config"]["options"]["metrics"];
    assert_eq!(metrics["samples"], 40);
    assert_eq!(metrics["curvature"]["probes"], 4);
    assert_eq!(metrics["pairs"]["t_star"], "min_deviation");
}
