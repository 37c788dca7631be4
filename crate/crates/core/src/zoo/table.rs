use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::zoo::io::write_atomic;
use crate::zoo::store::{CellEntry, ZooManifest};

pub const NA: &str = "NA";

/// A widths × batch-sizes matrix; `None` marks a missing value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTable<T> {
    pub widths: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    /// Row-major, one row per width.
    pub values: Vec<Vec<Option<T>>>,
}

impl<T: Clone> GridTable<T> {
    pub fn filled(widths: &[usize], batch_sizes: &[usize], value: Option<T>) -> Self {
        GridTable {
            widths: widths.to_vec(),
            batch_sizes: batch_sizes.to_vec(),
            values: vec![vec![value; batch_sizes.len()]; widths.len()],
        }
    }

    pub fn from_fn(widths: &[usize], batch_sizes: &[usize], mut f: impl FnMut(usize, usize) -> Option<T>) -> Self {
        let values = (0..widths.len())
            .map(|i| (0..batch_sizes.len()).map(|j| f(i, j)).collect())
            .collect();
        GridTable {
            widths: widths.to_vec(),
            batch_sizes: batch_sizes.to_vec(),
            values,
        }
    }

    pub fn get(&self, wi: usize, bi: usize) -> Option<&T> {
        self.values[wi][bi].as_ref()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.widths.len(), self.batch_sizes.len())
    }

    /// `(width index, batch index, value)` for every present entry.
    pub fn present(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        self.values.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter_map(move |(j, v)| v.as_ref().map(|v| (i, j, v)))
        })
    }

    pub fn map<U: Clone>(&self, mut f: impl FnMut(&T) -> Option<U>) -> GridTable<U> {
        GridTable {
            widths: self.widths.clone(),
            batch_sizes: self.batch_sizes.clone(),
            values: self
                .values
                .iter()
                .map(|row| row.iter().map(|v| v.as_ref().and_then(&mut f)).collect())
                .collect(),
        }
    }
}

/// Per-cell quantities that can be aggregated into a grid table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GridField {
    TrainLoss,
    TestLoss,
    TrainAcc,
    TestAcc,
    Ggap,
    LambdaMax,
    Trace,
    Mc,
    Cka,
}

impl GridField {
    pub const ALL: [GridField; 9] = [
        GridField::TrainLoss,
        GridField::TestLoss,
        GridField::TrainAcc,
        GridField::TestAcc,
        GridField::Ggap,
        GridField::LambdaMax,
        GridField::Trace,
        GridField::Mc,
        GridField::Cka,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GridField::TrainLoss => "train_loss",
            GridField::TestLoss => "test_loss",
            GridField::TrainAcc => "train_acc",
            GridField::TestAcc => "test_acc",
            GridField::Ggap => "ggap",
            GridField::LambdaMax => "lambda_max",
            GridField::Trace => "trace",
            GridField::Mc => "mc",
            GridField::Cka => "cka",
        }
    }

    pub fn is_pairwise(self) -> bool {
        matches!(self, GridField::Mc | GridField::Cka)
    }

    /// Value of this field for one cell, if available.
    pub fn value(self, entry: &CellEntry) -> Option<f64> {
        let f = entry.final_record.as_ref()?;
        let m = entry.metrics.as_ref();
        let v = match self {
            GridField::TrainLoss => f.train_loss,
            GridField::TestLoss => f.test_loss,
            GridField::TrainAcc => f.train_acc,
            GridField::TestAcc => f.test_acc,
            GridField::Ggap => entry.generalization_gap?,
            GridField::LambdaMax => m?.lambda_max,
            GridField::Trace => m?.hessian_trace,
            GridField::Mc => m?.mc_mean?,
            GridField::Cka => m?.cka_mean?,
        };
        v.is_finite().then_some(v)
    }
}

impl FromStr for GridField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let alias = match s {
            "hessian_trace" => "trace",
            "generalization_gap" => "ggap",
            "mc_mean" => "mc",
            "cka_mean" => "cka",
            other => other,
        };
        GridField::ALL
            .into_iter()
            .find(|f| f.name() == alias)
            .ok_or_else(|| {
                let known: Vec<&str> = GridField::ALL.iter().map(|f| f.name()).collect();
                Error::Schema(format!("unknown field {s:?}, expected one of {}", known.join(", ")))
            })
    }
}

impl Display for GridField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Mean over seeds of `field` for every (width, batch size). An entry is
/// missing when any of its seeds is unfinished, diverged, or lacks the value.
pub fn collect_grid(manifest: &ZooManifest, field: &str) -> Result<GridTable<f64>> {
    let field: GridField = field.parse()?;
    collect_field(manifest, field)
}

pub fn collect_field(manifest: &ZooManifest, field: GridField) -> Result<GridTable<f64>> {
    let g = &manifest.grid;
    if field.is_pairwise() && g.seeds.len() < 2 {
        return Err(Error::Schema(format!(
            "{field} is a pairwise metric and needs at least 2 seeds, the grid has {}",
            g.seeds.len()
        )));
    }
    Ok(GridTable::from_fn(&g.widths, &g.batch_sizes, |i, j| {
        seed_mean(manifest, g.widths[i], g.batch_sizes[j], |e| field.value(e))
    }))
}

/// Mean of `value` over the seeds of one (width, batch size) group; `None`
/// if any seed is missing, diverged, or yields `None`.
pub fn seed_mean(
    manifest: &ZooManifest,
    width: usize,
    batch_size: usize,
    value: impl Fn(&CellEntry) -> Option<f64>,
) -> Option<f64> {
    let seeds = &manifest.grid.seeds;
    let mut sum = 0.0;
    for &s in seeds {
        let e = manifest.get(width, batch_size, s)?;
        if e.cell.status != crate::zoo::CellStatus::Done {
            return None;
        }
        sum += value(e)?;
    }
    Some(sum / seeds.len() as f64)
}

/// Token used for one table entry in CSV form.
pub trait CsvToken: Sized {
    fn to_token(&self) -> String;
    fn from_token(s: &str) -> Result<Self>;
}

impl CsvToken for f64 {
    fn to_token(&self) -> String {
        // Display prints the shortest string that parses back to the same value
        format!("{self}")
    }

    fn from_token(s: &str) -> Result<Self> {
        s.parse()
            .map_err(|_| Error::Schema(format!("not a number: {s:?}")))
    }
}

/// CSV text: header `width,<batch sizes>`, one row per width, `NA` for
/// missing entries.
pub fn grid_to_csv<T: CsvToken>(table: &GridTable<T>) -> String {
    let mut out = String::from("width");
    for b in &table.batch_sizes {
        out.push_str(&format!(",{b}"));
    }
    out.push('\n');
    for (w, row) in table.widths.iter().zip(&table.values) {
        out.push_str(&w.to_string());
        for v in row {
            out.push(',');
            match v {
                Some(v) => out.push_str(&v.to_token()),
                None => out.push_str(NA),
            }
        }
        out.push('\n');
    }
    out
}

pub fn export_grid_csv<T: CsvToken>(table: &GridTable<T>, path: &Path) -> Result<()> {
    write_atomic(path, grid_to_csv(table).as_bytes())
}

pub fn parse_grid_csv<T: CsvToken + Clone>(text: &str) -> Result<GridTable<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let bad = |m: String| Error::Schema(m);
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.get(0) != Some("width") {
        return Err(bad("first header column must be `width`".into()));
    }
    let batch_sizes = header
        .iter()
        .skip(1)
        .map(|s| s.parse().map_err(|_| bad(format!("bad batch size {s:?}"))))
        .collect::<Result<Vec<usize>>>()?;
    let mut widths = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let w = record.get(0).unwrap_or_default();
        widths.push(w.parse().map_err(|_| bad(format!("bad width {w:?}")))?);
        let row = record
            .iter()
            .skip(1)
            .map(|t| if t == NA { Ok(None) } else { T::from_token(t).map(Some) })
            .collect::<Result<Vec<_>>>()?;
        values.push(row);
    }
    Ok(GridTable {
        widths,
        batch_sizes,
        values,
    })
}

pub fn read_grid_csv<T: CsvToken + Clone>(path: &Path) -> Result<GridTable<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid_csv(&text)
}
