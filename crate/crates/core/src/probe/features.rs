use serde::{Deserialize, Serialize};

use crate::nn::{ParameterVector, TensorKind};
use crate::phase::quantile;
use crate::scalar::Scalar;

/// Statistics computed per tensor, in feature order.
pub const STATS: [&str; 8] = ["mean", "std", "min", "q20", "q40", "q60", "q80", "max"];

/// Per-tensor summary statistics of a parameter vector, concatenated in
/// layout order (weights then biases of each layer).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFeatures {
    pub values: Vec<f64>,
    pub names: Vec<String>,
}

impl WeightFeatures {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn summarize(xs: &[f64]) -> [f64; 8] {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p| quantile(&sorted, p);
    [mean, var.sqrt(), sorted[0], q(0.2), q(0.4), q(0.6), q(0.8), sorted[sorted.len() - 1]]
}

/// Mean, population std, min, the 20/40/60/80th percentiles (linear
/// interpolation) and max of every weight and bias tensor.
pub fn weight_features<S: Scalar>(params: &ParameterVector<S>) -> WeightFeatures {
    let mut values = Vec::new();
    let mut names = Vec::new();
    for slot in params.layout().slots() {
        let xs: Vec<f64> = params.values()[slot.range()]
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN))
            .collect();
        if xs.is_empty() {
            continue;
        }
        let tag = match slot.kind {
            TensorKind::Weight => "w",
            TensorKind::Bias => "b",
        };
        values.extend(summarize(&xs));
        names.extend(STATS.iter().map(|s| format!("l{}.{tag}.{s}", slot.layer)));
    }
    WeightFeatures { values, names }
}
