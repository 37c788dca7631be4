//! On-disk zoo: one folder per cell, results assembled after the fact.
//!
//! ```text
//! <root>/manifest.json
//! <root>/<cell_key>/config.json
//! <root>/<cell_key>/results.json          written last; marks the cell finished
//! <root>/<cell_key>/metrics.json          added by the landscape pass
//! <root>/<cell_key>/checkpoints/epoch_<N>/{model.bin,layout.json}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DataSource, ModelSpec};
use crate::train::{train, EpochRecord, RunSummary, TrainConfig};
use crate::zoo::checkpoint::{load_checkpoint, save_checkpoint};
use crate::zoo::grid::{plan_grid, CellStatus, GridCell, GridSpec};
use crate::zoo::io::{read_json, write_json};
use crate::{Params, Splits};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const RESULTS_FILE: &str = "results.json";
pub const METRICS_FILE: &str = "metrics.json";

/// Everything needed to re-create and re-train one cell exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub cell: String,
    pub width: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub dataset: DataSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellResults {
    pub cell: String,
    pub status: CellStatus,
    pub run: RunSummary,
}

/// Mode connectivity and CKA between a cell and one sibling seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairMetrics {
    pub seeds: (u64, u64),
    pub mc: f64,
    pub t_star: f64,
    pub cka: f64,
}

/// Curvature of one checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureMetrics {
    pub epoch: usize,
    pub lambda_max: f64,
    pub lambda_converged: bool,
    pub power_iters: usize,
    pub hessian_trace: f64,
    /// `None` when a single probe was used.
    pub trace_stderr: Option<f64>,
    pub probes: usize,
}

/// Contents of a cell's `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellMetrics {
    pub epoch: usize,
    pub lambda_max: f64,
    pub hessian_trace: f64,
    /// Seed-pair means over the cell's (width, batch size) group.
    pub mc_mean: Option<f64>,
    pub cka_mean: Option<f64>,
    pub curvature: CurvatureMetrics,
    pub pairs: Vec<PairMetrics>,
    /// Curvature at every checkpoint, when requested.
    #[serde(default)]
    pub per_epoch: Vec<CurvatureMetrics>,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellEntry {
    pub path: String,
    pub cell: GridCell,
    #[serde(rename = "final")]
    pub final_record: Option<EpochRecord>,
    pub generalization_gap: Option<f64>,
    pub diverged_at: Option<usize>,
    pub metrics: Option<CellMetrics>,
    /// Why a cell is still pending after a run, if known.
    pub note: Option<String>,
}

/// Index of every cell in a zoo, keyed by cell key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZooManifest {
    pub grid: GridSpec,
    pub cells: BTreeMap<String, CellEntry>,
}

impl ZooManifest {
    /// Entries in grid order.
    pub fn entries(&self) -> Vec<&CellEntry> {
        let mut v: Vec<&CellEntry> = self.cells.values().collect();
        v.sort_by_key(|e| self.order_key(&e.cell));
        v
    }

    fn order_key(&self, c: &GridCell) -> (usize, usize, usize) {
        (
            self.grid.width_index(c.width).unwrap_or(usize::MAX),
            self.grid.batch_index(c.batch_size).unwrap_or(usize::MAX),
            self.grid.seeds.iter().position(|&s| s == c.seed).unwrap_or(usize::MAX),
        )
    }

    pub fn get(&self, width: usize, batch_size: usize, seed: u64) -> Option<&CellEntry> {
        self.cells.get(&crate::zoo::cell_key(width, batch_size, seed))
    }

    /// Keys of cells that are neither done nor diverged.
    pub fn incomplete(&self) -> Vec<String> {
        self.entries()
            .into_iter()
            .filter(|e| !e.cell.status.is_finished())
            .map(|e| e.path.clone())
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.incomplete().is_empty()
    }

    pub fn require_complete(&self) -> Result<()> {
        let cells = self.incomplete();
        if cells.is_empty() {
            Ok(())
        } else {
            Err(Error::IncompleteZoo { cells })
        }
    }
}

/// Limits for one `run_grid` call.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Stop after this many newly trained cells (simulates an interruption).
    pub max_cells: Option<usize>,
}

/// A zoo rooted at a directory.
#[derive(Clone, Debug)]
pub struct Zoo {
    root: PathBuf,
    grid: GridSpec,
}

impl Zoo {
    /// Creates the root and writes a manifest of pending cells. Re-creating
    /// with the same grid is a no-op; a different grid is refused.
    pub fn create(root: impl Into<PathBuf>, grid: GridSpec) -> Result<Zoo> {
        let root = root.into();
        plan_grid(&grid)?;
        let manifest_path = root.join(MANIFEST_FILE);
        if manifest_path.exists() {
            let existing = Zoo::open(&root)?;
            if existing.grid != grid {
                return Err(Error::InvalidInput(format!(
                    "{} already holds a zoo with a different grid",
                    root.display()
                )));
            }
            return Ok(existing);
        }
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let zoo = Zoo { root, grid };
        let manifest = zoo.manifest()?;
        zoo.write_manifest(&manifest)?;
        Ok(zoo)
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Zoo> {
        let root = root.into();
        let manifest: ZooManifest = read_json(&root.join(MANIFEST_FILE))?;
        manifest.grid.validate()?;
        Ok(Zoo {
            root,
            grid: manifest.grid,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn cells(&self) -> Vec<GridCell> {
        plan_grid(&self.grid).expect("validated on construction")
    }

    pub fn cell_dir(&self, cell: &GridCell) -> PathBuf {
        self.root.join(cell.key())
    }

    pub fn checkpoint_dir(&self, cell: &GridCell, epoch: usize) -> PathBuf {
        self.cell_dir(cell).join("checkpoints").join(format!("epoch_{epoch}"))
    }

    pub fn cell_config(&self, cell: &GridCell) -> CellConfig {
        CellConfig {
            cell: cell.key(),
            width: cell.width,
            batch_size: cell.batch_size,
            seed: cell.seed,
            model: self.grid.model_spec(cell),
            train: self.grid.train_config(cell),
            dataset: self.grid.dataset.clone(),
        }
    }

    pub fn splits(&self) -> Result<Splits> {
        self.grid.dataset.build()
    }

    /// `Ok(None)` when the cell has not finished.
    pub fn read_results(&self, cell: &GridCell) -> Result<Option<CellResults>> {
        let path = self.cell_dir(cell).join(RESULTS_FILE);
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    pub fn read_metrics(&self, cell: &GridCell) -> Result<Option<CellMetrics>> {
        let path = self.cell_dir(cell).join(METRICS_FILE);
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    pub fn write_metrics(&self, cell: &GridCell, metrics: &CellMetrics) -> Result<()> {
        write_json(&self.cell_dir(cell).join(METRICS_FILE), metrics)
    }

    /// Parameters of a finished cell at `epoch`, or at its last checkpoint.
    pub fn load_params(&self, cell: &GridCell, epoch: Option<usize>) -> Result<Params> {
        let epoch = match epoch {
            Some(e) => e,
            None => self.checkpoint_epochs(cell)?.last().copied().ok_or_else(|| {
                Error::Precondition(format!("cell {cell} has no checkpoints"))
            })?,
        };
        let p: Params = load_checkpoint(&self.checkpoint_dir(cell, epoch))?;
        let expected = self.grid.model_spec(cell).layout()?;
        if *p.layout() != expected {
            return Err(Error::Corruption {
                path: self.checkpoint_dir(cell, epoch),
                message: "layout does not match the cell architecture".into(),
            });
        }
        Ok(p)
    }

    pub fn checkpoint_epochs(&self, cell: &GridCell) -> Result<Vec<usize>> {
        match self.read_results(cell)? {
            Some(r) => Ok(r.run.checkpoint_epochs),
            None => Err(Error::IncompleteZoo {
                cells: vec![cell.key()],
            }),
        }
    }

    /// Assembles the manifest from the per-cell files on disk.
    pub fn manifest(&self) -> Result<ZooManifest> {
        let mut cells = BTreeMap::new();
        for cell in self.cells() {
            cells.insert(cell.key(), self.entry(&cell)?);
        }
        Ok(ZooManifest {
            grid: self.grid.clone(),
            cells,
        })
    }

    fn entry(&self, cell: &GridCell) -> Result<CellEntry> {
        let mut entry = CellEntry {
            path: cell.key(),
            cell: *cell,
            final_record: None,
            generalization_gap: None,
            diverged_at: None,
            metrics: None,
            note: None,
        };
        match self.read_results(cell) {
            Ok(Some(r)) => {
                entry.cell.status = r.status;
                entry.final_record = Some(r.run.final_record);
                entry.generalization_gap = Some(r.run.generalization_gap);
                entry.diverged_at = r.run.diverged_at;
                entry.metrics = self.read_metrics(cell)?;
            }
            Ok(None) => {}
            Err(e) => entry.note = Some(format!("unreadable results: {e}")),
        }
        Ok(entry)
    }

    pub fn write_manifest(&self, manifest: &ZooManifest) -> Result<()> {
        write_json(&self.root.join(MANIFEST_FILE), manifest)
    }

    /// Trains one cell and persists it. `results.json` is written last, so a
    /// cell interrupted midway is simply retrained from scratch.
    fn run_cell(&self, cell: &GridCell, data: &Splits) -> Result<()> {
        let dir = self.cell_dir(cell);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let config = self.cell_config(cell);
        write_json(&dir.join(CONFIG_FILE), &config)?;
        let run = train(&config.model, data, &config.train)?;
        for (epoch, params) in &run.checkpoints {
            save_checkpoint(&self.checkpoint_dir(cell, *epoch), params)?;
        }
        let status = if run.diverged() {
            CellStatus::Diverged
        } else {
            CellStatus::Done
        };
        let results = CellResults {
            cell: cell.key(),
            status,
            run: run.summary(),
        };
        write_json(&dir.join(RESULTS_FILE), &results)
    }
}

/// Trains every unfinished cell on a pool of `workers` threads, then
/// rewrites `manifest.json` from disk. Cells that fail stay pending with a
/// note; the remaining cells still run.
pub fn run_grid(zoo: &Zoo, workers: usize, options: RunOptions) -> Result<ZooManifest> {
    if workers == 0 {
        return Err(Error::InvalidInput("workers must be at least 1".into()));
    }
    let mut pending = Vec::new();
    for cell in zoo.cells() {
        let finished = matches!(zoo.read_results(&cell), Ok(Some(_)));
        if !finished {
            pending.push(cell);
        }
    }
    if let Some(k) = options.max_cells {
        pending.truncate(k);
    }
    let data = Arc::new(zoo.splits()?);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let failures: Vec<(String, String)> = pool.install(|| {
        pending
            .par_iter()
            .filter_map(|cell| {
                zoo.run_cell(cell, &data)
                    .err()
                    .map(|e| (cell.key(), e.to_string()))
            })
            .collect()
    });
    let mut manifest = zoo.manifest()?;
    for (key, note) in failures {
        if let Some(entry) = manifest.cells.get_mut(&key) {
            entry.cell.status = CellStatus::Pending;
            entry.note = Some(note);
        }
    }
    zoo.write_manifest(&manifest)?;
    Ok(manifest)
}
