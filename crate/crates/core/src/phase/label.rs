use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::zoo::io::{read_json, write_json};
use crate::zoo::{seed_mean, CsvToken, GridField, GridTable, ZooManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhaseLabel {
    I,
    II,
    III,
    IVA,
    IVB,
}

impl PhaseLabel {
    pub const ALL: [PhaseLabel; 5] = [
        PhaseLabel::I,
        PhaseLabel::II,
        PhaseLabel::III,
        PhaseLabel::IVA,
        PhaseLabel::IVB,
    ];

    pub fn token(self) -> &'static str {
        match self {
            PhaseLabel::I => "I",
            PhaseLabel::II => "II",
            PhaseLabel::III => "III",
            PhaseLabel::IVA => "IVA",
            PhaseLabel::IVB => "IVB",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for PhaseLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" => Ok(PhaseLabel::I),
            "II" => Ok(PhaseLabel::II),
            "III" => Ok(PhaseLabel::III),
            "IVA" | "IV-A" | "IV_A" => Ok(PhaseLabel::IVA),
            "IVB" | "IV-B" | "IV_B" => Ok(PhaseLabel::IVB),
            other => Err(Error::Schema(format!("unknown phase label {other:?}"))),
        }
    }
}

impl Serialize for PhaseLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.token())
    }
}

impl<'de> Deserialize<'de> for PhaseLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl CsvToken for PhaseLabel {
    fn to_token(&self) -> String {
        self.token().to_string()
    }

    fn from_token(s: &str) -> Result<Self> {
        s.parse()
    }
}

/// (width, batch size) of the group a record summarizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellRef {
    pub width: usize,
    pub batch_size: usize,
}

/// The split variables of the decision tree, plus context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub train_loss: f64,
    pub test_acc: f64,
    pub generalization_gap: f64,
    pub lambda_max: f64,
    pub hessian_trace: f64,
    pub mc: f64,
    pub cka: f64,
    #[serde(default)]
    pub cell: Option<CellRef>,
}

impl MetricRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.train_loss,
            self.test_acc,
            self.generalization_gap,
            self.lambda_max,
            self.hessian_trace,
            self.mc,
            self.cka,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Cut points of the tree. `tau_trace = +∞` (stored as `null`) disables the
/// trace condition of the IV-A / IV-B split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseThresholds {
    pub tau_loss: f64,
    pub tau_mc: f64,
    pub tau_cka: f64,
    #[serde(with = "inf_as_null")]
    pub tau_trace: f64,
}

impl PhaseThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau_cka) {
            return Err(Error::InvalidInput(format!("tau_cka {} outside [0, 1]", self.tau_cka)));
        }
        if !(self.tau_mc <= 0.0) {
            return Err(Error::InvalidInput(format!("tau_mc {} must be nonpositive", self.tau_mc)));
        }
        if !self.tau_loss.is_finite() || self.tau_trace.is_nan() {
            return Err(Error::InvalidInput("thresholds must be numbers".into()));
        }
        Ok(())
    }
}

/// The decision tree.
///
/// High train loss splits on mc into I (barrier) or II; low train loss
/// splits on mc into III (barrier) or IV, and IV is IV-B when CKA is high
/// and the trace is low, IV-A otherwise.
pub fn classify(r: &MetricRecord, t: &PhaseThresholds) -> PhaseLabel {
    let barrier = r.mc < t.tau_mc;
    if r.train_loss > t.tau_loss {
        if barrier {
            PhaseLabel::I
        } else {
            PhaseLabel::II
        }
    } else if barrier {
        PhaseLabel::III
    } else if r.cka >= t.tau_cka && r.hessian_trace <= t.tau_trace {
        PhaseLabel::IVB
    } else {
        PhaseLabel::IVA
    }
}

/// What `phase_thresholds.json` holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdsFile {
    pub thresholds: PhaseThresholds,
    /// True when the reference labels came from the quantile bootstrap
    /// rather than from annotation.
    pub provisional: bool,
    pub train_accuracy: f64,
    pub low_confidence: bool,
    pub n_records: usize,
}

pub fn save_thresholds(path: &Path, file: &ThresholdsFile) -> Result<()> {
    write_json(path, file)
}

pub fn load_thresholds(path: &Path) -> Result<ThresholdsFile> {
    let f: ThresholdsFile = read_json(path)?;
    f.thresholds.validate()?;
    Ok(f)
}

/// Seed-mean metric records per (width, batch size); `None` where any
/// ingredient is missing.
pub fn group_records(manifest: &ZooManifest) -> GridTable<MetricRecord> {
    let g = &manifest.grid;
    let pairwise = g.seeds.len() >= 2;
    GridTable::from_fn(&g.widths, &g.batch_sizes, |i, j| {
        let (w, b) = (g.widths[i], g.batch_sizes[j]);
        let mean = |f: GridField| seed_mean(manifest, w, b, |e| f.value(e));
        if !pairwise {
            return None;
        }
        let r = MetricRecord {
            train_loss: mean(GridField::TrainLoss)?,
            test_acc: mean(GridField::TestAcc)?,
            generalization_gap: mean(GridField::Ggap)?,
            lambda_max: mean(GridField::LambdaMax)?,
            hessian_trace: mean(GridField::Trace)?,
            mc: mean(GridField::Mc)?,
            cka: mean(GridField::Cka)?,
            cell: Some(CellRef { width: w, batch_size: b }),
        };
        r.is_finite().then_some(r)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub table: GridTable<PhaseLabel>,
    /// `w<width>_bs<batch>` groups left unlabeled for lack of metrics.
    pub unlabeled: Vec<String>,
}

/// Labels every (width, batch size) group from its seed-mean metrics.
pub fn phase_grid(manifest: &ZooManifest, thresholds: &PhaseThresholds) -> PhaseGrid {
    let records = group_records(manifest);
    let mut unlabeled = Vec::new();
    for (i, row) in records.values.iter().enumerate() {
        for (j, r) in row.iter().enumerate() {
            if r.is_none() {
                unlabeled.push(format!("w{}_bs{}", records.widths[i], records.batch_sizes[j]));
            }
        }
    }
    PhaseGrid {
        table: records.map(|r| Some(classify(r, thresholds))),
        unlabeled,
    }
}
