use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DataSource, ModelSpec};
use crate::rng::mix_seed;
use crate::train::TrainConfig;

/// The load × temperature × seed lattice of a zoo.
///
/// `widths` is the load axis (wider means lower load) and `batch_sizes` the
/// temperature axis (larger means colder). Both must be strictly ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub widths: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub base_spec: ModelSpec,
    pub base_config: TrainConfig,
    pub dataset: DataSource,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    #[default]
    Pending,
    Done,
    Diverged,
}

impl CellStatus {
    pub fn is_finished(self) -> bool {
        self != CellStatus::Pending
    }
}

/// One training job of the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub width: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub status: CellStatus,
}

impl GridCell {
    pub fn new(width: usize, batch_size: usize, seed: u64) -> Self {
        GridCell {
            width,
            batch_size,
            seed,
            status: CellStatus::Pending,
        }
    }

    /// `w<width>_bs<batch>_s<seed>`
    pub fn key(&self) -> String {
        cell_key(self.width, self.batch_size, self.seed)
    }

    pub fn with_status(self, status: CellStatus) -> Self {
        GridCell { status, ..self }
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

pub fn cell_key(width: usize, batch_size: usize, seed: u64) -> String {
    format!("w{width}_bs{batch_size}_s{seed}")
}

fn strictly_ascending(name: &str, xs: &[usize]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::InvalidSpec(format!("{name} must not be empty")));
    }
    if xs.contains(&0) {
        return Err(Error::InvalidSpec(format!("{name} must be positive")));
    }
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSpec(format!(
            "{name} must be strictly ascending without duplicates"
        )));
    }
    Ok(())
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        strictly_ascending("widths", &self.widths)?;
        strictly_ascending("batch_sizes", &self.batch_sizes)?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidSpec("seeds must not be empty".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSpec("seeds must not repeat".into()));
        }
        self.base_spec.validate()?;
        self.base_config.validate()?;
        if let Some(c) = self.dataset.num_classes() {
            if c > self.base_spec.output_dim {
                return Err(Error::InvalidSpec(format!(
                    "dataset has {c} classes but output_dim is {}",
                    self.base_spec.output_dim
                )));
            }
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.widths.len() * self.batch_sizes.len() * self.seeds.len()
    }

    /// Architecture of one cell: the base spec at the cell width, initialized
    /// from the cell seed.
    pub fn model_spec(&self, cell: &GridCell) -> ModelSpec {
        self.base_spec.with_width(cell.width).with_seed(cell.seed)
    }

    /// Training config of one cell. The shuffling stream is derived from the
    /// cell seed so it is independent of the initialization draws.
    pub fn train_config(&self, cell: &GridCell) -> TrainConfig {
        TrainConfig {
            batch_size: cell.batch_size,
            seed: mix_seed(cell.seed, 0x5348_5546),
            ..self.base_config.clone()
        }
    }

    pub fn width_index(&self, width: usize) -> Option<usize> {
        self.widths.iter().position(|&w| w == width)
    }

    pub fn batch_index(&self, batch_size: usize) -> Option<usize> {
        self.batch_sizes.iter().position(|&b| b == batch_size)
    }

    pub fn contains(&self, cell: &GridCell) -> bool {
        self.width_index(cell.width).is_some()
            && self.batch_index(cell.batch_size).is_some()
            && self.seeds.contains(&cell.seed)
    }
}

/// Every cell of the grid, ordered by (width, batch size, seed position).
pub fn plan_grid(spec: &GridSpec) -> Result<Vec<GridCell>> {
    spec.validate()?;
    let mut cells = Vec::with_capacity(spec.num_cells());
    for &w in &spec.widths {
        for &b in &spec.batch_sizes {
            for &s in &spec.seeds {
                cells.push(GridCell::new(w, b, s));
            }
        }
    }
    Ok(cells)
}
