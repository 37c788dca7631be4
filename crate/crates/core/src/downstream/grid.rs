use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DataSource, Dataset, ModelSpec};
use crate::train::{evaluate, TrainConfig};
use crate::zoo::io::write_json;
use crate::zoo::{export_grid_csv, CellStatus, GridCell, GridTable, Zoo};
use crate::Params;

use super::methods::{
    average_aligned, average_last, average_naive, ensemble_accuracy, finetune, interpolate,
    prune_magnitude,
};

/// A downstream procedure and its settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum DownstreamMethod {
    Prune {
        sparsity: f64,
    },
    Ensemble,
    AvgNaive,
    AvgAligned,
    AvgEpochs {
        last_k: usize,
    },
    /// `(1−α)·earlier + α·final`, where `earlier` is the checkpoint at
    /// `epoch` (default: the one before the final).
    Interpolate {
        alpha: f64,
        #[serde(default)]
        epoch: Option<usize>,
    },
    Finetune {
        target: DataSource,
        config: TrainConfig,
        #[serde(default = "yes")]
        reinit_head: bool,
    },
}

fn yes() -> bool {
    true
}

impl DownstreamMethod {
    pub fn name(&self) -> &'static str {
        match self {
            DownstreamMethod::Prune { .. } => "prune",
            DownstreamMethod::Ensemble => "ensemble",
            DownstreamMethod::AvgNaive => "avg_naive",
            DownstreamMethod::AvgAligned => "avg_aligned",
            DownstreamMethod::AvgEpochs { .. } => "avg_epochs",
            DownstreamMethod::Interpolate { .. } => "interpolate",
            DownstreamMethod::Finetune { .. } => "finetune",
        }
    }

    fn is_pairwise(&self) -> bool {
        matches!(self, DownstreamMethod::AvgNaive | DownstreamMethod::AvgAligned)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamRecord {
    pub width: usize,
    pub batch_size: usize,
    /// One seed for per-model methods, two for pairwise ones, all for the
    /// ensemble.
    pub seeds: Vec<u64>,
    pub method: String,
    pub test_acc: f64,
    /// Against the mean base accuracy of exactly the seeds in `seeds`.
    pub delta_vs_base: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamReport {
    pub method: DownstreamMethod,
    /// Seed-mean test accuracy of the stored checkpoints, the reference for
    /// every delta.
    pub base: GridTable<f64>,
    pub table: GridTable<f64>,
    pub records: Vec<DownstreamRecord>,
    /// Groups that could not be evaluated, with the reason.
    pub failures: Vec<String>,
}

struct Group {
    width: usize,
    batch_size: usize,
    spec: ModelSpec,
    /// (seed, checkpoint epochs, final params) of every finished, non-diverged seed
    members: Vec<(u64, Vec<usize>, Params)>,
    complete: bool,
}

fn load_group(zoo: &Zoo, width: usize, batch_size: usize) -> Result<Group> {
    let grid = zoo.grid();
    let mut members = Vec::new();
    let mut complete = true;
    for &seed in &grid.seeds {
        let cell = GridCell::new(width, batch_size, seed);
        match zoo.read_results(&cell)? {
            Some(r) if r.status == CellStatus::Done => {
                let params = zoo.load_params(&cell, None)?;
                members.push((seed, r.run.checkpoint_epochs, params));
            }
            _ => complete = false,
        }
    }
    Ok(Group {
        width,
        batch_size,
        spec: grid.model_spec(&GridCell::new(width, batch_size, grid.seeds[0])),
        members,
        complete,
    })
}

fn acc(p: &Params, spec: &ModelSpec, test: &Dataset<f64>) -> Result<f64> {
    evaluate(p, spec, test).map(|(_, a)| a)
}

/// Per-group outcome: seed-mean base accuracy, then `(seeds, method
/// accuracy, mean base accuracy of those seeds)` per evaluation.
type GroupResult = (f64, Vec<(Vec<u64>, f64, f64)>);

fn run_group(zoo: &Zoo, g: &Group, method: &DownstreamMethod, test: &Dataset<f64>) -> Result<GroupResult> {
    if !g.complete || g.members.is_empty() {
        return Err(Error::IncompleteZoo {
            cells: vec![format!("w{}_bs{}", g.width, g.batch_size)],
        });
    }
    let spec = &g.spec;
    let mut own = Vec::with_capacity(g.members.len());
    for (_, _, p) in &g.members {
        own.push(acc(p, spec, test)?);
    }
    let base = own.iter().sum::<f64>() / own.len() as f64;

    let mut out = Vec::new();
    if method.is_pairwise() {
        if g.members.len() < 2 {
            return Err(Error::Precondition("pairwise method needs at least 2 seeds".into()));
        }
        for i in 0..g.members.len() {
            for j in i + 1..g.members.len() {
                let pair = [g.members[i].2.clone(), g.members[j].2.clone()];
                let merged = match method {
                    DownstreamMethod::AvgAligned => average_aligned(&pair, spec)?,
                    _ => average_naive(&pair)?,
                };
                let a = acc(&merged, spec, test)?;
                out.push((vec![g.members[i].0, g.members[j].0], a, 0.5 * (own[i] + own[j])));
            }
        }
        return Ok((base, out));
    }
    if let DownstreamMethod::Ensemble = method {
        let models: Vec<Params> = g.members.iter().map(|m| m.2.clone()).collect();
        let seeds = g.members.iter().map(|m| m.0).collect();
        out.push((seeds, ensemble_accuracy(&models, spec, test)?, base));
        return Ok((base, out));
    }
    for ((seed, epochs, params), &own_acc) in g.members.iter().zip(&own) {
        let cell = GridCell::new(g.width, g.batch_size, *seed);
        let a = match method {
            DownstreamMethod::Prune { sparsity } => acc(&prune_magnitude(params, *sparsity)?, spec, test)?,
            DownstreamMethod::AvgEpochs { last_k } => {
                let take = (*last_k).min(epochs.len());
                if take < *last_k {
                    return Err(Error::Precondition(format!(
                        "cell {cell} has {} checkpoints, {last_k} requested",
                        epochs.len()
                    )));
                }
                let mut ckpts = Vec::new();
                for &e in &epochs[epochs.len() - take..] {
                    ckpts.push((e, zoo.load_params(&cell, Some(e))?));
                }
                acc(&average_last(&ckpts, *last_k)?, spec, test)?
            }
            DownstreamMethod::Interpolate { alpha, epoch } => {
                let earlier = match epoch {
                    Some(e) => *e,
                    None if epochs.len() >= 2 => epochs[epochs.len() - 2],
                    None => return Err(Error::Precondition(format!("cell {cell} has a single checkpoint"))),
                };
                let from = zoo.load_params(&cell, Some(earlier))?;
                acc(&interpolate(&from, params, *alpha)?, spec, test)?
            }
            DownstreamMethod::Finetune {
                target,
                config,
                reinit_head,
            } => {
                let data = target.build::<f64>()?;
                let (_, run) = finetune(params, spec, &data, config, *reinit_head)?;
                run.final_record.test_acc
            }
            DownstreamMethod::Ensemble | DownstreamMethod::AvgNaive | DownstreamMethod::AvgAligned => {
                unreachable!("handled above")
            }
        };
        out.push((vec![*seed], a, own_acc));
    }
    Ok((base, out))
}

/// Applies `method` to every (width, batch size) group of a trained zoo and
/// averages over seeds (or seed pairs). Groups that fail are left `NA`.
pub fn downstream_grid(zoo: &Zoo, method: &DownstreamMethod, workers: usize) -> Result<DownstreamReport> {
    if workers == 0 {
        return Err(Error::InvalidInput("workers must be at least 1".into()));
    }
    let grid = zoo.grid();
    let test = zoo.splits()?.test;
    let coords: Vec<(usize, usize)> = (0..grid.widths.len())
        .flat_map(|i| (0..grid.batch_sizes.len()).map(move |j| (i, j)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<GroupResult>> = pool.install(|| {
        coords
            .par_iter()
            .map(|&(i, j)| {
                let g = load_group(zoo, grid.widths[i], grid.batch_sizes[j])?;
                run_group(zoo, &g, method, &test)
            })
            .collect()
    });
    let mut base = GridTable::filled(&grid.widths, &grid.batch_sizes, None);
    let mut table = GridTable::filled(&grid.widths, &grid.batch_sizes, None);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (&(i, j), r) in coords.iter().zip(results) {
        let (w, b) = (grid.widths[i], grid.batch_sizes[j]);
        match r {
            Ok((b0, vals)) => {
                let mean = vals.iter().map(|v| v.1).sum::<f64>() / vals.len() as f64;
                base.values[i][j] = Some(b0);
                table.values[i][j] = Some(mean);
                for (seeds, a, reference) in vals {
                    records.push(DownstreamRecord {
                        width: w,
                        batch_size: b,
                        seeds,
                        method: method.name().to_string(),
                        test_acc: a,
                        delta_vs_base: a - reference,
                    });
                }
            }
            Err(e) => failures.push(format!("w{w}_bs{b}: {e}")),
        }
    }
    Ok(DownstreamReport {
        method: method.clone(),
        base,
        table,
        records,
        failures,
    })
}

/// Writes `downstream/<method>.json` and `downstream/<method>.csv` under
/// the zoo root; returns the JSON path.
pub fn save_downstream(zoo: &Zoo, report: &DownstreamReport) -> Result<PathBuf> {
    let dir = zoo.root().join("downstream");
    let json = dir.join(format!("{}.json", report.method.name()));
    write_json(&json, report)?;
    export_grid_csv(&report.table, &dir.join(format!("{}.csv", report.method.name())))?;
    Ok(json)
}
