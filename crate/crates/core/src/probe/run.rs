use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::zoo::io::{write_atomic, write_json};
use crate::zoo::{CellEntry, CellStatus, Zoo, ZooManifest};

use super::features::weight_features;
use super::ridge::{fit_ridge, r2_score, RidgeModel};

pub const PROBE_REPORT_FILE: &str = "probe_report.json";

/// Quantity a probe predicts from weight statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTarget {
    TestAcc,
    Ggap,
    Cka,
    /// Base-10 log of the Hessian trace; cells with a non-positive trace
    /// are left out.
    LogHessianTrace,
    /// Seed-pair mean mode connectivity of the cell's group.
    Mc,
}

impl ProbeTarget {
    pub const ALL: [ProbeTarget; 5] = [
        ProbeTarget::TestAcc,
        ProbeTarget::Ggap,
        ProbeTarget::Cka,
        ProbeTarget::LogHessianTrace,
        ProbeTarget::Mc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProbeTarget::TestAcc => "test_acc",
            ProbeTarget::Ggap => "ggap",
            ProbeTarget::Cka => "cka",
            ProbeTarget::LogHessianTrace => "log_hessian_trace",
            ProbeTarget::Mc => "mc",
        }
    }

    pub fn value(self, entry: &CellEntry) -> Option<f64> {
        if entry.cell.status != CellStatus::Done {
            return None;
        }
        let m = entry.metrics.as_ref();
        let v = match self {
            ProbeTarget::TestAcc => entry.final_record.as_ref()?.test_acc,
            ProbeTarget::Ggap => entry.generalization_gap?,
            ProbeTarget::Cka => m?.cka_mean?,
            ProbeTarget::Mc => m?.mc_mean?,
            ProbeTarget::LogHessianTrace => {
                let t = m?.hessian_trace;
                if t <= 0.0 {
                    return None;
                }
                t.log10()
            }
        };
        v.is_finite().then_some(v)
    }
}

impl FromStr for ProbeTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProbeTarget::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = ProbeTarget::ALL.iter().map(|t| t.name()).collect();
                Error::Schema(format!("unknown probe target {s:?}, expected one of {}", known.join(", ")))
            })
    }
}

impl fmt::Display for ProbeTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub width: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub features: Vec<f64>,
    pub target: f64,
}

impl ProbeRow {
    fn group(&self) -> (usize, usize) {
        (self.width, self.batch_size)
    }
}

/// Feature matrix and target of one probe problem, one row per model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeData {
    pub target: ProbeTarget,
    pub feature_names: Vec<String>,
    pub rows: Vec<ProbeRow>,
}

impl ProbeData {
    /// Rows are deduplicated by (width, batch size, seed), keeping the first,
    /// and sorted so the result does not depend on input order.
    pub fn new(target: ProbeTarget, feature_names: Vec<String>, rows: Vec<ProbeRow>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut kept: Vec<ProbeRow> = rows
            .into_iter()
            .filter(|r| seen.insert((r.width, r.batch_size, r.seed)))
            .collect();
        if let Some(r) = kept.iter().find(|r| r.features.len() != feature_names.len()) {
            return Err(Error::Shape(format!(
                "row w{}_bs{}_s{} has {} features, expected {}",
                r.width,
                r.batch_size,
                r.seed,
                r.features.len(),
                feature_names.len()
            )));
        }
        kept.sort_by_key(|r| (r.width, r.batch_size, r.seed));
        Ok(ProbeData {
            target,
            feature_names,
            rows: kept,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.rows.iter().map(ProbeRow::group).collect::<BTreeSet<_>>().len()
    }

    /// The same features with targets randomly permuted across rows; a
    /// no-signal control.
    pub fn permuted(&self, seed: u64) -> ProbeData {
        let mut targets: Vec<f64> = self.rows.iter().map(|r| r.target).collect();
        targets.shuffle(&mut substream(seed, 0x5045_524d));
        let mut out = self.clone();
        for (r, t) in out.rows.iter_mut().zip(targets) {
            r.target = t;
        }
        out
    }

    /// CSV with columns `width,batch_size,seed,target,<feature names>`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["width".to_string(), "batch_size".into(), "seed".into(), self.target.name().into()];
        header.extend(self.feature_names.iter().cloned());
        let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.width.to_string(), r.batch_size.to_string(), r.seed.to_string(), r.target.to_string()];
            rec.extend(r.features.iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv()?.as_bytes())
    }
}

/// Weight features of the final checkpoint of every finished cell that has
/// a value for `target`.
pub fn collect_probe_data(zoo: &Zoo, manifest: &ZooManifest, target: ProbeTarget, workers: usize) -> Result<ProbeData> {
    if workers == 0 {
        return Err(Error::InvalidInput("workers must be at least 1".into()));
    }
    let jobs: Vec<(&CellEntry, f64)> = manifest
        .entries()
        .into_iter()
        .filter_map(|e| target.value(e).map(|v| (e, v)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let feats: Vec<Result<(Vec<String>, ProbeRow)>> = pool.install(|| {
        jobs.par_iter()
            .map(|(e, v)| {
                let f = weight_features(&zoo.load_params(&e.cell, None)?);
                Ok((
                    f.names,
                    ProbeRow {
                        width: e.cell.width,
                        batch_size: e.cell.batch_size,
                        seed: e.cell.seed,
                        features: f.values,
                        target: *v,
                    },
                ))
            })
            .collect()
    });
    let mut names = Vec::new();
    let mut rows = Vec::new();
    for r in feats {
        let (n, row) = r?;
        names = n;
        rows.push(row);
    }
    ProbeData::new(target, names, rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeOptions {
    pub split_seed: u64,
    /// Fraction of cells used for fitting (and lambda selection).
    pub train_fraction: f64,
    pub lambda_grid: Vec<f64>,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            split_seed: 0,
            train_fraction: 0.8,
            lambda_grid: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSplit {
    pub train_fraction: f64,
    pub seed: u64,
    pub train_cells: Vec<(usize, usize)>,
    pub test_cells: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub target: ProbeTarget,
    /// R² on rows from cells never used for fitting or lambda selection.
    pub r2_test: f64,
    pub r2_train: f64,
    pub ridge_lambda: f64,
    pub split: ProbeSplit,
    pub n_rows: usize,
    /// Features are standardized on the fitting rows before the solve.
    pub standardized: bool,
    /// `(lambda, validation mean squared error)` for every candidate.
    pub validation: Vec<(f64, f64)>,
    pub dropped_features: Vec<String>,
    pub model: RidgeModel,
}

fn cell_split(cells: &[(usize, usize)], fraction: f64, seed: u64, stream: u64) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut shuffled = cells.to_vec();
    shuffled.shuffle(&mut substream(seed, stream));
    let n = cells.len();
    let n_fit = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut fit = shuffled[..n_fit].to_vec();
    let mut held = shuffled[n_fit..].to_vec();
    fit.sort_unstable();
    held.sort_unstable();
    (fit, held)
}

fn select<'a>(rows: &'a [ProbeRow], cells: &[(usize, usize)]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let picked: Vec<&'a ProbeRow> = rows.iter().filter(|r| cells.binary_search(&r.group()).is_ok()).collect();
    (
        picked.iter().map(|r| r.features.clone()).collect(),
        picked.iter().map(|r| r.target).collect(),
    )
}

fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / truth.len() as f64
}

/// Fits a ridge probe on a cell-level split and reports held-out R². All
/// seeds of a (width, batch size) cell fall on the same side of every
/// split. Lambda is chosen by validation error on an inner split of the
/// fitting cells, then the probe is refit on all fitting cells.
pub fn run_probe(data: &ProbeData, opts: &ProbeOptions) -> Result<ProbeReport> {
    if !(opts.train_fraction > 0.0 && opts.train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train_fraction must lie in (0, 1), got {}",
            opts.train_fraction
        )));
    }
    if opts.lambda_grid.is_empty() || opts.lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput("lambda_grid must be non-empty, finite and ≥ 0".into()));
    }
    let cells: Vec<(usize, usize)> = data.rows.iter().map(ProbeRow::group).collect::<BTreeSet<_>>().into_iter().collect();
    if cells.len() < 10 {
        return Err(Error::SampleSize(format!(
            "probe needs at least 10 cells with a {} value, found {}",
            data.target,
            cells.len()
        )));
    }
    let (fit_cells, test_cells) = cell_split(&cells, opts.train_fraction, opts.split_seed, 0);
    let (inner_cells, val_cells) = cell_split(&fit_cells, opts.train_fraction, opts.split_seed, 1);

    let (xi, yi) = select(&data.rows, &inner_cells);
    let (xv, yv) = select(&data.rows, &val_cells);
    let mut validation = Vec::new();
    let mut best = (f64::INFINITY, opts.lambda_grid[0]);
    for &lambda in &opts.lambda_grid {
        let m = fit_ridge(&xi, &yi, lambda)?;
        let err = mse(&m.predict(&xv), &yv);
        validation.push((lambda, err));
        if err < best.0 {
            best = (err, lambda);
        }
    }

    let (xf, yf) = select(&data.rows, &fit_cells);
    let (xt, yt) = select(&data.rows, &test_cells);
    let model = fit_ridge(&xf, &yf, best.1)?;
    let r2_test = r2_score(&model.predict(&xt), &yt)?;
    let r2_train = r2_score(&model.predict(&xf), &yf).unwrap_or(f64::NAN);
    Ok(ProbeReport {
        target: data.target,
        r2_test,
        r2_train,
        ridge_lambda: best.1,
        split: ProbeSplit {
            train_fraction: opts.train_fraction,
            seed: opts.split_seed,
            train_cells: fit_cells,
            test_cells,
        },
        n_rows: data.rows.len(),
        standardized: true,
        validation,
        dropped_features: model.dropped.iter().map(|&j| data.feature_names[j].clone()).collect(),
        model,
    })
}

/// Writes `probe_report.json` under the zoo root.
pub fn save_probe_reports(root: &Path, reports: &[ProbeReport]) -> Result<()> {
    write_json(&root.join(PROBE_REPORT_FILE), &reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n_cells: usize, noise: bool) -> ProbeData {
        let mut rows = Vec::new();
        for c in 0..n_cells {
            for s in 0..3u64 {
                let a = c as f64 + 0.1 * s as f64;
                let b = ((c * 7 + s as usize * 3) % 5) as f64;
                let target = if noise { ((c * 13 + s as usize * 29) % 11) as f64 } else { 0.5 * a - b };
                rows.push(ProbeRow {
                    width: c + 1,
                    batch_size: 8,
                    seed: s,
                    features: vec![a, b, 1.0],
                    target,
                });
            }
        }
        ProbeData::new(ProbeTarget::TestAcc, vec!["a".into(), "b".into(), "c".into()], rows).unwrap()
    }

    #[test]
    fn linear_signal_is_recovered() {
        let r = run_probe(&synthetic(20, false), &ProbeOptions::default()).unwrap();
        assert!(r.r2_test > 0.99, "{}", r.r2_test);
        assert_eq!(r.dropped_features, vec!["c"]);
        for c in &r.split.test_cells {
            assert!(!r.split.train_cells.contains(c));
        }
    }

    #[test]
    fn duplicate_rows_do_not_change_the_report() {
        let d = synthetic(12, false);
        let mut doubled = d.rows.clone();
        doubled.extend(d.rows.iter().cloned());
        doubled.reverse();
        let d2 = ProbeData::new(d.target, d.feature_names.clone(), doubled).unwrap();
        let opts = ProbeOptions::default();
        assert_eq!(run_probe(&d, &opts).unwrap(), run_probe(&d2, &opts).unwrap());
    }

    #[test]
    fn too_few_cells() {
        assert!(matches!(
            run_probe(&synthetic(9, false), &ProbeOptions::default()),
            Err(Error::SampleSize(_))
        ));
    }

    #[test]
    fn target_names_parse() {
        for t in ProbeTarget::ALL {
            assert_eq!(t.name().parse::<ProbeTarget>().unwrap(), t);
        }
        assert!("loss".parse::<ProbeTarget>().is_err());
    }
}
