//! Seeded synthetic datasets and CSV ingestion.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{mix_seed, seeded};
use crate::scalar::{cast, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Spirals,
    GaussianMixture,
    Csv,
}

/// Labeled samples of one split, inputs stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<S> {
    inputs: Vec<S>,
    labels: Vec<usize>,
    input_dim: usize,
    num_classes: usize,
    pub split: Split,
    pub generator: Generator,
    pub seed: u64,
}

/// Borrowed minibatch.
#[derive(Clone, Copy, Debug)]
pub struct BatchRef<'a, S> {
    pub inputs: &'a [S],
    pub labels: &'a [usize],
    pub input_dim: usize,
}

impl<S> BatchRef<'_, S> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Owned minibatch gathered from one dataset split.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<S> {
    pub inputs: Vec<S>,
    pub labels: Vec<usize>,
    pub input_dim: usize,
}

impl<S: Scalar> Batch<S> {
    pub fn new(inputs: Vec<S>, labels: Vec<usize>, input_dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("batch must hold at least one row".into()));
        }
        if inputs.len() != labels.len() * input_dim {
            return Err(Error::Shape(format!(
                "{} input values for {} rows of dimension {input_dim}",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Batch {
            inputs,
            labels,
            input_dim,
        })
    }

    pub fn view(&self) -> BatchRef<'_, S> {
        BatchRef {
            inputs: &self.inputs,
            labels: &self.labels,
            input_dim: self.input_dim,
        }
    }
}

impl<S: Scalar> Dataset<S> {
    pub fn new(
        inputs: Vec<S>,
        labels: Vec<usize>,
        input_dim: usize,
        num_classes: usize,
        split: Split,
        generator: Generator,
        seed: u64,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("dataset is empty".into()));
        }
        if input_dim == 0 || inputs.len() != labels.len() * input_dim {
            return Err(Error::Shape(format!(
                "{} input values for {} rows of dimension {input_dim}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Dataset {
            inputs,
            labels,
            input_dim,
            num_classes,
            split,
            generator,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn inputs(&self) -> &[S] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// The whole split as one batch.
    pub fn view(&self) -> BatchRef<'_, S> {
        BatchRef {
            inputs: &self.inputs,
            labels: &self.labels,
            input_dim: self.input_dim,
        }
    }

    pub fn gather(&self, indices: &[usize]) -> Batch<S> {
        let mut inputs = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Batch {
            inputs,
            labels,
            input_dim: self.input_dim,
        }
    }

    /// Deterministic subsample without replacement, original order kept.
    pub fn subsample(&self, n: usize, seed: u64) -> Dataset<S> {
        if n >= self.len() {
            return self.clone();
        }
        let mut idx = index::sample(&mut seeded(seed), self.len(), n).into_vec();
        idx.sort_unstable();
        let b = self.gather(&idx);
        Dataset {
            inputs: b.inputs,
            labels: b.labels,
            ..self.clone()
        }
    }

    /// Rotates the first two input coordinates by `angle` radians.
    pub fn rotated(&self, angle: f64) -> Dataset<S> {
        let mut out = self.clone();
        if self.input_dim < 2 {
            return out;
        }
        let (s, c) = angle.sin_cos();
        for row in out.inputs.chunks_mut(self.input_dim) {
            let x = row[0].to_f64_lossy();
            let y = row[1].to_f64_lossy();
            row[0] = S::lit(c * x - s * y);
            row[1] = S::lit(s * x + c * y);
        }
        out
    }

    pub fn cast<T: Scalar>(&self) -> Dataset<T> {
        Dataset {
            inputs: self.inputs.iter().map(|&v| cast(v)).collect(),
            labels: self.labels.clone(),
            input_dim: self.input_dim,
            num_classes: self.num_classes,
            split: self.split,
            generator: self.generator,
            seed: self.seed,
        }
    }
}

fn check_counts(n: usize, classes: usize) -> Result<()> {
    if classes < 2 || n < classes {
        return Err(Error::InvalidInput(format!(
            "need n >= classes >= 2, got n = {n}, classes = {classes}"
        )));
    }
    Ok(())
}

/// Per-class sample counts, balanced up to rounding.
fn class_counts(n: usize, classes: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..classes).map(move |k| (k, n / classes + usize::from(k < n % classes)))
}

/// Interleaved planar spirals, one arm per class.
///
/// Arm `k` sweeps angle `4k + 4r` over radius `r ∈ [0, 1)`, with Gaussian
/// angular noise of scale `noise`.
pub fn make_spirals<S: Scalar>(n: usize, classes: usize, noise: f64, seed: u64) -> Result<Dataset<S>> {
    check_counts(n, classes)?;
    if !(noise >= 0.0) {
        return Err(Error::InvalidInput("noise must be nonnegative".into()));
    }
    let mut rng = seeded(seed);
    let mut inputs = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for (k, count) in class_counts(n, classes) {
        for i in 0..count {
            let jitter: f64 = rng.random();
            let r = (i as f64 + jitter) / count as f64;
            let z: f64 = rng.sample(StandardNormal);
            let t = 4.0 * k as f64 + 4.0 * r + noise * z;
            inputs.push(S::lit(r * t.sin()));
            inputs.push(S::lit(r * t.cos()));
            labels.push(k);
        }
    }
    Dataset::new(inputs, labels, 2, classes, Split::Train, Generator::Spirals, seed)
}

/// Isotropic unit-variance Gaussians whose means sit on a circle with
/// adjacent means `separation` apart.
pub fn make_gaussian_mixture<S: Scalar>(
    n: usize,
    classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset<S>> {
    check_counts(n, classes)?;
    if !(separation >= 0.0) {
        return Err(Error::InvalidInput("separation must be nonnegative".into()));
    }
    let radius = separation / (2.0 * (PI / classes as f64).sin());
    let mut rng = seeded(seed);
    let mut inputs = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for (k, count) in class_counts(n, classes) {
        let angle = 2.0 * PI * k as f64 / classes as f64;
        let (my, mx) = angle.sin_cos();
        for _ in 0..count {
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            inputs.push(S::lit(radius * mx + zx));
            inputs.push(S::lit(radius * my + zy));
            labels.push(k);
        }
    }
    Dataset::new(
        inputs,
        labels,
        2,
        classes,
        Split::Train,
        Generator::GaussianMixture,
        seed,
    )
}

/// How to interpret a CSV file.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    /// Class count; inferred as `max label + 1` when absent.
    #[serde(default)]
    pub num_classes: Option<usize>,
}

/// Reads a dataset with header `x0,...,xD,label`.
///
/// Row numbers in errors count file lines, the header being line 1.
pub fn load_csv<S: Scalar>(path: &Path, schema: &CsvSchema, split: Split) -> Result<Dataset<S>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Ingestion {
            row: 0,
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Ingestion {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let width = headers.len();
    if width < 2 || &headers[width - 1] != "label" {
        return Err(Error::Ingestion {
            row: 1,
            message: "header must end with a `label` column".into(),
        });
    }
    for (j, h) in headers.iter().take(width - 1).enumerate() {
        if h != format!("x{j}") {
            return Err(Error::Ingestion {
                row: 1,
                message: format!("column {j} is `{h}`, expected `x{j}`"),
            });
        }
    }
    let dim = width - 1;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Ingestion {
            row,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Ingestion {
                row,
                message: format!("{} fields, expected {width}", record.len()),
            });
        }
        for j in 0..dim {
            let v: f64 = record[j].parse().map_err(|_| Error::Ingestion {
                row,
                message: format!("`{}` is not a number", &record[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    row,
                    message: format!("non-finite value in column x{j}"),
                });
            }
            inputs.push(S::lit(v));
        }
        let label: usize = record[dim].parse().map_err(|_| Error::Ingestion {
            row,
            message: format!("`{}` is not a nonnegative integer label", &record[dim]),
        })?;
        if let Some(c) = schema.num_classes {
            if label >= c {
                return Err(Error::Ingestion {
                    row,
                    message: format!("label {label} outside [0, {c})"),
                });
            }
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Ingestion {
            row: 1,
            message: "no data rows".into(),
        });
    }
    let classes = schema
        .num_classes
        .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    Dataset::new(inputs, labels, dim, classes, split, Generator::Csv, 0)
}

/// Train and test splits of one task.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSplits<S> {
    pub train: Dataset<S>,
    pub test: Dataset<S>,
}

impl<S: Scalar> DataSplits<S> {
    pub fn cast<T: Scalar>(&self) -> DataSplits<T> {
        DataSplits {
            train: self.train.cast(),
            test: self.test.cast(),
        }
    }
}

fn default_noise() -> f64 {
    0.2
}

/// Serializable recipe for a [`DataSplits`]; stored in every cell config so
/// that a model can be re-created and re-evaluated exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Spirals {
        n_train: usize,
        n_test: usize,
        classes: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        seed: u64,
        /// Rotation of the whole task in radians.
        #[serde(default)]
        rotation: f64,
    },
    GaussianMixture {
        n_train: usize,
        n_test: usize,
        classes: usize,
        separation: f64,
        seed: u64,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        num_classes: Option<usize>,
    },
}

impl DataSource {
    pub fn spirals(n_train: usize, n_test: usize, classes: usize, noise: f64, seed: u64) -> Self {
        DataSource::Spirals {
            n_train,
            n_test,
            classes,
            noise,
            seed,
            rotation: 0.0,
        }
    }

    /// Builds both splits; the test split draws from a seed stream derived
    /// from the train seed.
    pub fn build<S: Scalar>(&self) -> Result<DataSplits<S>> {
        match self {
            DataSource::Spirals {
                n_train,
                n_test,
                classes,
                noise,
                seed,
                rotation,
            } => {
                let train = make_spirals::<S>(*n_train, *classes, *noise, *seed)?;
                let mut test = make_spirals::<S>(*n_test, *classes, *noise, mix_seed(*seed, 1))?;
                test.split = Split::Test;
                let (train, test) = if *rotation != 0.0 {
                    (train.rotated(*rotation), test.rotated(*rotation))
                } else {
                    (train, test)
                };
                Ok(DataSplits { train, test })
            }
            DataSource::GaussianMixture {
                n_train,
                n_test,
                classes,
                separation,
                seed,
            } => {
                let train = make_gaussian_mixture::<S>(*n_train, *classes, *separation, *seed)?;
                let mut test =
                    make_gaussian_mixture::<S>(*n_test, *classes, *separation, mix_seed(*seed, 1))?;
                test.split = Split::Test;
                Ok(DataSplits { train, test })
            }
            DataSource::Csv {
                train,
                test,
                num_classes,
            } => {
                let schema = CsvSchema {
                    num_classes: *num_classes,
                };
                let mut train = load_csv::<S>(train, &schema, Split::Train)?;
                let mut test = load_csv::<S>(test, &schema, Split::Test)?;
                if train.input_dim != test.input_dim {
                    return Err(Error::Shape("train and test CSV widths differ".into()));
                }
                let classes = train.num_classes.max(test.num_classes);
                train.num_classes = classes;
                test.num_classes = classes;
                Ok(DataSplits { train, test })
            }
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self {
            DataSource::Spirals { classes, .. } | DataSource::GaussianMixture { classes, .. } => {
                Some(*classes)
            }
            DataSource::Csv { num_classes, .. } => *num_classes,
        }
    }
}
