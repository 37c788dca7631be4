use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use phasezoo::downstream::{downstream_grid, save_downstream, DownstreamMethod};
use phasezoo::hpo::run_hpo_experiment;
use phasezoo::landscape::{compute_zoo_metrics, TStar};
use phasezoo::phase::{
    bootstrap_labels, fit_thresholds, group_records, load_thresholds, phase_grid, save_thresholds,
    tree_accuracy, FitReport, MetricRecord, PhaseLabel, ThresholdsFile,
};
use phasezoo::probe::{collect_probe_data, run_probe, save_probe_reports, ProbeTarget};
use phasezoo::zoo::io::write_json;
use phasezoo::zoo::{
    collect_field, export_grid_csv, read_grid_csv, run_grid, CellStatus, GridField, GridTable,
    RunOptions, Zoo, MANIFEST_FILE,
};
use phasezoo::Error;
use serde_json::{json, Value};

use crate::config::{load_config, Options, PipelineConfig};
use crate::failure::Failure;
use crate::provenance::{record, sha256_file, Provenance};
use crate::{Cli, Command, DownstreamCmd, ExportCmd, HpoCmd, MetricsCmd, PhaseCmd, ProbeCmd, ZooCmd};

pub const THRESHOLDS_FILE: &str = "phase_thresholds.json";
pub const HPO_FILE: &str = "hpo_report.json";

/// The seven landscape panels exported by `export grid --field all`.
pub const PANELS: [GridField; 7] = [
    GridField::TrainLoss,
    GridField::TestAcc,
    GridField::Ggap,
    GridField::LambdaMax,
    GridField::Trace,
    GridField::Mc,
    GridField::Cka,
];

struct Ctx {
    cfg: Option<PipelineConfig>,
    opts: Options,
    root: PathBuf,
    workers: usize,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
}

fn context(cli: &Cli) -> Result<Ctx, Failure> {
    let cfg = cli.config.as_deref().map(load_config).transpose()?;
    let root = cli
        .zoo
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.zoo.clone()))
        .ok_or_else(|| Failure::config("no zoo root: pass --zoo or set `zoo` in the config"))?;
    let workers = cli.workers.or(cfg.as_ref().and_then(|c| c.workers)).unwrap_or(1);
    if workers == 0 {
        return Err(Failure::config("workers must be at least 1"));
    }
    let mut opts = cfg.as_ref().map(Options::from).unwrap_or_default();
    if let Some(seed) = cli.seed {
        opts = opts.with_seed(seed);
    }
    if let Command::Metrics(MetricsCmd::Compute {
        samples,
        probes,
        all_checkpoints,
        mc_argmin,
    }) = &cli.command
    {
        let m = &mut opts.metrics;
        m.samples = samples.or(m.samples);
        m.curvature.probes = probes.unwrap_or(m.curvature.probes);
        m.all_checkpoints |= *all_checkpoints;
        if *mc_argmin {
            m.pairs.t_star = TStar::MinDeviation;
        }
    }
    let mut inputs = BTreeMap::new();
    if let Some(path) = &cli.config {
        inputs.insert("config".to_string(), sha256_file(path)?);
    }
    Ok(Ctx {
        cfg,
        opts,
        root,
        workers,
        seed: cli.seed,
        inputs,
    })
}

impl Ctx {
    /// Opens the zoo, creating it from the config grid if needed. Without a
    /// config a missing zoo counts as an empty one.
    fn zoo(&mut self) -> Result<Zoo, Failure> {
        let zoo = match &self.cfg {
            Some(c) => Zoo::create(&self.root, c.grid.clone())?,
            None if self.root.join(MANIFEST_FILE).exists() => Zoo::open(&self.root)?,
            None => {
                return Err(Failure::partial(
                    format!("no zoo at {}; run `zoo plan` first", self.root.display()),
                    Vec::new(),
                ))
            }
        };
        self.hash_input("manifest", &self.root.join(MANIFEST_FILE))?;
        Ok(zoo)
    }

    fn hash_input(&mut self, name: &str, path: &Path) -> Result<(), Failure> {
        let h = sha256_file(path)?;
        self.inputs.insert(name.to_string(), h);
        Ok(())
    }

    fn record(&self, zoo: &Zoo, command: &str) -> Result<(), Failure> {
        let config = json!({
            "zoo": self.root,
            "grid": zoo.grid(),
            "workers": self.workers,
            "options": self.opts,
        });
        record(
            &self.root,
            command,
            Provenance {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: self.seed,
                workers: self.workers,
                config,
                inputs: self.inputs.clone(),
            },
        )
    }
}

pub fn downstream_name(d: &DownstreamCmd) -> &'static str {
    match d {
        DownstreamCmd::Prune { .. } => "prune",
        DownstreamCmd::Ensemble => "ensemble",
        DownstreamCmd::AvgNaive => "avg_naive",
        DownstreamCmd::AvgAligned => "avg_aligned",
        DownstreamCmd::AvgEpochs { .. } => "avg_epochs",
        DownstreamCmd::Interpolate { .. } => "interpolate",
        DownstreamCmd::Finetune => "finetune",
    }
}

pub fn run(cli: &Cli) -> Result<Value, Failure> {
    let mut ctx = context(cli)?;
    let name = cli.command.name();
    if let Command::Zoo(ZooCmd::Plan) = cli.command {
        if ctx.cfg.is_none() {
            return Err(Failure::config("`zoo plan` needs --config"));
        }
    }
    let zoo = ctx.zoo()?;
    match &cli.command {
        Command::Phase(PhaseCmd::Fit { labels: Some(p) }) => ctx.hash_input("labels", p)?,
        Command::Phase(PhaseCmd::Classify { thresholds })
        | Command::Hpo(HpoCmd::Run { thresholds, .. }) => {
            let p = thresholds.clone().unwrap_or_else(|| ctx.root.join(THRESHOLDS_FILE));
            if p.exists() {
                ctx.hash_input("thresholds", &p)?;
            }
        }
        _ => {}
    }
    ctx.record(&zoo, &name)?;
    match &cli.command {
        Command::Zoo(ZooCmd::Plan) => plan(&zoo),
        Command::Zoo(ZooCmd::Run { max_cells }) => train(&ctx, &zoo, *max_cells),
        Command::Metrics(_) => {
            let m = compute_zoo_metrics(&zoo, &ctx.opts.metrics, ctx.workers)?;
            let with = m.entries().iter().filter(|e| e.metrics.is_some()).count();
            println!("metrics written for {with} cells");
            Ok(json!({ "cells_with_metrics": with }))
        }
        Command::Phase(PhaseCmd::Fit { labels }) => fit(&ctx, &zoo, labels.as_deref()),
        Command::Phase(PhaseCmd::Classify { thresholds }) => classify(&ctx, &zoo, thresholds.as_deref()),
        Command::Hpo(HpoCmd::Run {
            trials,
            exhaustive,
            thresholds,
        }) => hpo(&ctx, &zoo, *trials, *exhaustive, thresholds.as_deref()),
        Command::Downstream(d) => downstream(&ctx, &zoo, d),
        Command::Probe(ProbeCmd::Run { target }) => probe(&ctx, &zoo, target),
        Command::Export(ExportCmd::Grid(g)) => export(&ctx, &zoo, &g.field, g.out.as_deref()),
    }
}

fn plan(zoo: &Zoo) -> Result<Value, Failure> {
    let n = zoo.grid().num_cells();
    println!("{n} cells planned");
    Ok(json!({ "cells": n, "zoo": zoo.root() }))
}

fn train(ctx: &Ctx, zoo: &Zoo, max_cells: Option<usize>) -> Result<Value, Failure> {
    let m = run_grid(zoo, ctx.workers, RunOptions { max_cells })?;
    let count = |s: CellStatus| m.entries().iter().filter(|e| e.cell.status == s).count();
    let (done, diverged) = (count(CellStatus::Done), count(CellStatus::Diverged));
    println!("{done} done, {diverged} diverged, {} pending", m.incomplete().len());
    m.require_complete()?;
    Ok(json!({ "done": done, "diverged": diverged, "pending": 0 }))
}

fn thresholds_path(ctx: &Ctx, given: Option<&Path>) -> PathBuf {
    given.map(Path::to_path_buf).unwrap_or_else(|| ctx.root.join(THRESHOLDS_FILE))
}

fn fit(ctx: &Ctx, zoo: &Zoo, labels: Option<&Path>) -> Result<Value, Failure> {
    let manifest = zoo.manifest()?;
    manifest.require_complete()?;
    let table = group_records(&manifest);
    let labels = labels.map(Path::to_path_buf).or(ctx.opts.phase.labels.clone());
    let (records, labels, boot) = match labels {
        Some(path) => {
            let lt: GridTable<PhaseLabel> = read_grid_csv(&path)?;
            if lt.widths != table.widths || lt.batch_sizes != table.batch_sizes {
                return Err(Failure::config(format!(
                    "{}: label grid axes differ from the zoo grid",
                    path.display()
                )));
            }
            let mut rs = Vec::new();
            let mut ls = Vec::new();
            for (i, j, r) in table.present() {
                if let Some(l) = lt.get(i, j) {
                    rs.push(r.clone());
                    ls.push(*l);
                }
            }
            (rs, ls, None)
        }
        None => {
            let rs: Vec<MetricRecord> = table.present().map(|(_, _, r)| r.clone()).collect();
            let (t, ls) = bootstrap_labels(&rs)?;
            (rs, ls, Some(t))
        }
    };
    let provisional = boot.is_some();
    let report = match (fit_thresholds(&records, &labels, &ctx.opts.phase.bounds), boot) {
        (Ok(r), _) => r,
        // a small grid may not show every phase; the bootstrap cut points
        // reproduce their own labels exactly
        (Err(Error::Coverage { .. }), Some(t)) => FitReport {
            thresholds: t,
            train_accuracy: tree_accuracy(&records, &labels, &t),
            low_confidence: false,
            max_class_frequency: 0.0,
            n_records: records.len(),
        },
        (Err(e), _) => return Err(e.into()),
    };
    let file = ThresholdsFile {
        thresholds: report.thresholds,
        provisional,
        train_accuracy: report.train_accuracy,
        low_confidence: report.low_confidence,
        n_records: report.n_records,
    };
    let path = ctx.root.join(THRESHOLDS_FILE);
    save_thresholds(&path, &file)?;
    println!(
        "fitted on {} records, train accuracy {:.3}{}",
        report.n_records,
        report.train_accuracy,
        if provisional { " (bootstrapped labels)" } else { "" }
    );
    Ok(json!({
        "thresholds": report.thresholds,
        "train_accuracy": report.train_accuracy,
        "low_confidence": report.low_confidence,
        "provisional": provisional,
        "path": path,
    }))
}

fn classify(ctx: &Ctx, zoo: &Zoo, thresholds: Option<&Path>) -> Result<Value, Failure> {
    let t = load_thresholds(&thresholds_path(ctx, thresholds))?;
    let manifest = zoo.manifest()?;
    let pg = phase_grid(&manifest, &t.thresholds);
    let path = ctx.root.join("grids").join("phase.csv");
    export_grid_csv(&pg.table, &path)?;
    let mut counts = BTreeMap::new();
    for (_, _, l) in pg.table.present() {
        *counts.entry(l.token()).or_insert(0usize) += 1;
    }
    println!("{} groups labeled, {} unlabeled", pg.table.present().count(), pg.unlabeled.len());
    Ok(json!({ "phases": counts, "unlabeled": pg.unlabeled, "path": path }))
}

fn hpo(ctx: &Ctx, zoo: &Zoo, trials: Option<usize>, exhaustive: bool, thresholds: Option<&Path>) -> Result<Value, Failure> {
    let t = load_thresholds(&thresholds_path(ctx, thresholds))?;
    let manifest = zoo.manifest()?;
    manifest.require_complete()?;
    let mut opts = ctx.opts.hpo;
    if let Some(n) = trials {
        opts.trials = n;
    }
    opts.exhaustive |= exhaustive;
    let out = run_hpo_experiment(&manifest, &t.thresholds, &opts)?;
    let path = ctx.root.join(HPO_FILE);
    write_json(&path, &out)?;
    println!(
        "random {:.4} ± {:.4}, phase-aware {:.4} ± {:.4}",
        out.random.mean_gain, out.random.std_gain, out.phase_aware.mean_gain, out.phase_aware.std_gain
    );
    Ok(json!({
        "random_mean_gain": out.random.mean_gain,
        "random_std_gain": out.random.std_gain,
        "phase_aware_mean_gain": out.phase_aware.mean_gain,
        "phase_aware_std_gain": out.phase_aware.std_gain,
        "trials": out.phase_aware.trials,
        "path": path,
    }))
}

fn downstream(ctx: &Ctx, zoo: &Zoo, cmd: &DownstreamCmd) -> Result<Value, Failure> {
    let d = &ctx.opts.downstream;
    let method = match cmd {
        DownstreamCmd::Prune { sparsity } => DownstreamMethod::Prune {
            sparsity: sparsity.unwrap_or(d.sparsity),
        },
        DownstreamCmd::Ensemble => DownstreamMethod::Ensemble,
        DownstreamCmd::AvgNaive => DownstreamMethod::AvgNaive,
        DownstreamCmd::AvgAligned => DownstreamMethod::AvgAligned,
        DownstreamCmd::AvgEpochs { last_k } => DownstreamMethod::AvgEpochs {
            last_k: last_k.unwrap_or(d.last_k),
        },
        DownstreamCmd::Interpolate { alpha, epoch } => DownstreamMethod::Interpolate {
            alpha: alpha.unwrap_or(d.alpha),
            epoch: epoch.or(d.epoch),
        },
        DownstreamCmd::Finetune => d
            .finetune
            .as_ref()
            .ok_or_else(|| Failure::config("`downstream finetune` needs a `downstream.finetune` config section"))?
            .method(),
    };
    let report = downstream_grid(zoo, &method, ctx.workers)?;
    let path = save_downstream(zoo, &report)?;
    let n = report.records.len();
    let mean_delta = report.records.iter().map(|r| r.delta_vs_base).sum::<f64>() / n.max(1) as f64;
    println!("{n} evaluations, {} groups failed", report.failures.len());
    Ok(json!({
        "method": method.name(),
        "evaluations": n,
        "failures": report.failures,
        "mean_delta_vs_base": mean_delta,
        "path": path,
    }))
}

fn probe(ctx: &Ctx, zoo: &Zoo, targets: &[String]) -> Result<Value, Failure> {
    let targets: Vec<ProbeTarget> = if targets.is_empty() {
        ctx.opts.probe.targets.clone()
    } else {
        targets.iter().map(|t| t.parse()).collect::<Result<_, _>>()?
    };
    let manifest = zoo.manifest()?;
    let mut reports = Vec::new();
    let mut r2 = BTreeMap::new();
    for t in targets {
        let data = collect_probe_data(zoo, &manifest, t, ctx.workers)?;
        data.export_csv(&ctx.root.join("probe").join(format!("features_{t}.csv")))?;
        let report = run_probe(&data, &ctx.opts.probe.options())?;
        println!("{t}: held-out R² {:.3} (lambda {})", report.r2_test, report.ridge_lambda);
        r2.insert(t.name(), report.r2_test);
        reports.push(report);
    }
    save_probe_reports(&ctx.root, &reports)?;
    Ok(json!({ "r2_test": r2 }))
}

fn export(ctx: &Ctx, zoo: &Zoo, field: &str, out: Option<&Path>) -> Result<Value, Failure> {
    let fields: Vec<GridField> = if field == "all" {
        PANELS.to_vec()
    } else {
        vec![field.parse()?]
    };
    let manifest = zoo.manifest()?;
    manifest.require_complete()?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| ctx.root.join("grids"));
    let mut files = Vec::new();
    for f in fields {
        let table = collect_field(&manifest, f)?;
        let path = dir.join(format!("{f}.csv"));
        export_grid_csv(&table, &path)?;
        println!("{}", path.display());
        files.push(path);
    }
    Ok(json!({ "files": files }))
}
