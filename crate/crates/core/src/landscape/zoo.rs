use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{
    cka_similarity, curvature, fit_bezier, mode_connectivity, BezierOptions, CurvatureOptions,
    MlpLoss, TStar,
};
use crate::nn::{Dataset, ModelSpec};
use crate::rng::mix_seed;
use crate::zoo::{CellMetrics, CellStatus, CurvatureMetrics, GridCell, PairMetrics, Zoo, ZooManifest};
use crate::Params;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairOptions {
    pub bezier: BezierOptions,
    pub t_grid: usize,
    pub t_star: TStar,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            bezier: BezierOptions::default(),
            t_grid: 21,
            t_star: TStar::MaxDeviation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub mc_mean: f64,
    pub cka_mean: f64,
    pub pairs: Vec<PairMetrics>,
}

/// Mode connectivity and CKA for every unordered pair of `models`
/// (same architecture, different seeds), plus their means.
pub fn pairwise_metrics(
    models: &[(u64, Params)],
    spec: &ModelSpec,
    data: &Dataset<f64>,
    opts: &PairOptions,
) -> Result<PairwiseReport> {
    if models.len() < 2 {
        return Err(Error::Precondition(format!(
            "pairwise metrics need at least 2 seeds, got {}",
            models.len()
        )));
    }
    let obj = MlpLoss::new(spec, data)?;
    let logits = models
        .iter()
        .map(|(_, p)| obj.logits(p.values()))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for i in 0..models.len() {
        for j in i + 1..models.len() {
            let bezier = BezierOptions {
                seed: mix_seed(opts.bezier.seed, (i * models.len() + j) as u64),
                ..opts.bezier
            };
            let curve = fit_bezier(&models[i].1, &models[j].1, &obj, &bezier)?;
            let conn = mode_connectivity(&curve, &obj, opts.t_grid, opts.t_star)?;
            let sim = cka_similarity(&logits[i], &logits[j])?;
            pairs.push(PairMetrics {
                seeds: (models[i].0, models[j].0),
                mc: conn.mc,
                t_star: conn.t_star,
                cka: sim.cka,
            });
        }
    }
    let n = pairs.len() as f64;
    Ok(PairwiseReport {
        mc_mean: pairs.iter().map(|p| p.mc).sum::<f64>() / n,
        cka_mean: pairs.iter().map(|p| p.cka).sum::<f64>() / n,
        pairs,
    })
}

/// Settings for annotating a whole zoo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricOptions {
    pub curvature: CurvatureOptions,
    pub pairs: PairOptions,
    /// Deterministic train-split subsample for the metrics; full split if
    /// `None`.
    pub samples: Option<usize>,
    /// Also record curvature at every checkpoint, not just the final one.
    pub all_checkpoints: bool,
    pub seed: u64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            curvature: CurvatureOptions::default(),
            pairs: PairOptions::default(),
            samples: None,
            all_checkpoints: false,
            seed: 0,
        }
    }
}

fn cell_stream(opts: &MetricOptions, cell: &GridCell) -> u64 {
    mix_seed(
        mix_seed(opts.seed, cell.width as u64),
        mix_seed(cell.batch_size as u64, cell.seed),
    )
}

fn cell_curvature(
    params: &Params,
    epoch: usize,
    obj: &MlpLoss<'_>,
    opts: &CurvatureOptions,
) -> Result<CurvatureMetrics> {
    let r = curvature(obj, params.values(), opts)?;
    Ok(CurvatureMetrics {
        epoch,
        lambda_max: r.lambda_max,
        lambda_converged: r.converged,
        power_iters: r.power_iters,
        hessian_trace: r.trace_estimate,
        trace_stderr: r.trace_stderr,
        probes: r.probes_used,
    })
}

/// Annotates one (width, batch size) group: curvature per seed, pairwise
/// metrics over the seeds that finished without diverging.
fn annotate_group(zoo: &Zoo, cells: &[GridCell], data: &Dataset<f64>, opts: &MetricOptions) -> Result<Vec<(GridCell, CellMetrics)>> {
    let grid = zoo.grid();
    let mut done = Vec::new();
    let mut out = Vec::new();
    for cell in cells {
        let Some(results) = zoo.read_results(cell)? else {
            continue;
        };
        let spec = grid.model_spec(cell);
        let obj = MlpLoss::new(&spec, data)?;
        let epochs = results.run.checkpoint_epochs.clone();
        let last = *epochs.last().expect("epoch 0 is always saved");
        let params = zoo.load_params(cell, Some(last))?;
        let mut copts = opts.curvature;
        copts.seed = cell_stream(opts, cell);
        let Ok(curv) = cell_curvature(&params, last, &obj, &copts) else {
            continue;
        };
        let mut per_epoch = Vec::new();
        if opts.all_checkpoints {
            for &e in &epochs {
                let p = zoo.load_params(cell, Some(e))?;
                if let Ok(c) = cell_curvature(&p, e, &obj, &copts) {
                    per_epoch.push(c);
                }
            }
        }
        if results.status == CellStatus::Done {
            done.push((cell.seed, params));
        }
        out.push((
            *cell,
            CellMetrics {
                epoch: last,
                lambda_max: curv.lambda_max,
                hessian_trace: curv.hessian_trace,
                mc_mean: None,
                cka_mean: None,
                curvature: curv,
                pairs: Vec::new(),
                per_epoch,
                samples: data.len(),
            },
        ));
    }
    if done.len() >= 2 {
        let spec = grid.model_spec(&cells[0]);
        let mut popts = opts.pairs;
        popts.bezier.seed = cell_stream(opts, &GridCell::new(cells[0].width, cells[0].batch_size, u64::MAX));
        if let Ok(report) = pairwise_metrics(&done, &spec, data, &popts) {
            for (_, m) in out.iter_mut() {
                m.mc_mean = Some(report.mc_mean);
                m.cka_mean = Some(report.cka_mean);
                m.pairs = report.pairs.clone();
            }
        }
    }
    Ok(out)
}

/// Computes `metrics.json` for every finished cell of a trained zoo and
/// refreshes the manifest.
pub fn compute_zoo_metrics(zoo: &Zoo, opts: &MetricOptions, workers: usize) -> Result<ZooManifest> {
    if workers == 0 {
        return Err(Error::InvalidInput("workers must be at least 1".into()));
    }
    zoo.manifest()?.require_complete()?;
    let splits = zoo.splits()?;
    let data = match opts.samples {
        Some(n) => splits.train.subsample(n, mix_seed(opts.seed, 0x4d45_5452)),
        None => splits.train,
    };
    let grid = zoo.grid();
    let groups: Vec<Vec<GridCell>> = grid
        .widths
        .iter()
        .flat_map(|&w| {
            grid.batch_sizes.iter().map(move |&b| {
                grid.seeds.iter().map(|&s| GridCell::new(w, b, s)).collect()
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<Vec<(GridCell, CellMetrics)>>> =
        pool.install(|| groups.par_iter().map(|g| annotate_group(zoo, g, &data, opts)).collect());
    for group in results {
        for (cell, metrics) in group? {
            zoo.write_metrics(&cell, &metrics)?;
        }
    }
    let manifest = zoo.manifest()?;
    zoo.write_manifest(&manifest)?;
    Ok(manifest)
}
