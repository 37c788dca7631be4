use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::engine::logits_slice;
use crate::nn::{build_model, DataSplits, Dataset, ModelSpec, ParameterVector, TensorKind};
use crate::rng::mix_seed;
use crate::scalar::Scalar;
use crate::train::{train_from, RunRecord, TrainConfig};

use super::hungarian::hungarian;

/// Global one-shot magnitude pruning: the `⌊sparsity · m_w⌋` weights of
/// smallest magnitude are zeroed, ties broken by position. Biases are
/// never pruned.
pub fn prune_magnitude<S: Scalar>(params: &ParameterVector<S>, sparsity: f64) -> Result<ParameterVector<S>> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::InvalidInput(format!("sparsity {sparsity} outside [0, 1]")));
    }
    let mut idx: Vec<usize> = params
        .layout()
        .slots()
        .iter()
        .filter(|s| s.kind == TensorKind::Weight)
        .flat_map(|s| s.range())
        .collect();
    let k = (sparsity * idx.len() as f64).floor() as usize;
    let v = params.values();
    idx.sort_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut out = params.clone();
    for &i in &idx[..k] {
        out.values_mut()[i] = S::zero();
    }
    Ok(out)
}

/// Top-1 accuracy of the mean softmax output of `models`.
pub fn ensemble_accuracy<S: Scalar>(models: &[ParameterVector<S>], spec: &ModelSpec, data: &Dataset<S>) -> Result<f64> {
    if models.is_empty() {
        return Err(Error::InvalidInput("ensemble needs at least one model".into()));
    }
    let layout = spec.layout()?;
    if models.iter().any(|m| *m.layout() != layout) {
        return Err(Error::Shape("ensemble member does not match the model spec".into()));
    }
    if data.input_dim() != spec.input_dim || data.is_empty() {
        return Err(Error::Shape("ensemble data does not match the model spec".into()));
    }
    let n = data.len();
    let c = spec.output_dim;
    let mut probs = vec![S::zero(); n * c];
    for m in models {
        let logits = logits_slice(m.values(), spec, data.inputs(), n)?;
        for i in 0..n {
            let row = logits.row(i);
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let exps: Vec<S> = row.iter().map(|&z| (z - max).exp()).collect();
            let total = exps.iter().copied().fold(S::zero(), |a, b| a + b);
            for (p, e) in probs[i * c..(i + 1) * c].iter_mut().zip(exps) {
                *p += e / total;
            }
        }
    }
    let k = S::lit(models.len() as f64);
    let mut correct = 0;
    for (i, &y) in data.labels().iter().enumerate() {
        let row = &probs[i * c..(i + 1) * c];
        let mut best = 0;
        for j in 1..c {
            if row[j] / k > row[best] / k {
                best = j;
            }
        }
        correct += usize::from(best == y);
    }
    Ok(correct as f64 / n as f64)
}

/// Coordinate-wise mean.
pub fn average_naive<S: Scalar>(models: &[ParameterVector<S>]) -> Result<ParameterVector<S>> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to average".into()))?;
    let mut sum = first.values().to_vec();
    for m in &models[1..] {
        first.ensure_same_layout(m)?;
        for (s, &v) in sum.iter_mut().zip(m.values()) {
            *s += v;
        }
    }
    let k = S::lit(models.len() as f64);
    first.with_values(sum.into_iter().map(|s| s / k).collect())
}

/// `(1−α)·a + α·b`.
pub fn interpolate<S: Scalar>(a: &ParameterVector<S>, b: &ParameterVector<S>, alpha: f64) -> Result<ParameterVector<S>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1]")));
    }
    a.ensure_same_layout(b)?;
    let (wa, wb) = (S::lit(1.0 - alpha), S::lit(alpha));
    a.with_values(a.values().iter().zip(b.values()).map(|(&x, &y)| wa * x + wb * y).collect())
}

/// Mean of the last `last_k` checkpoints of a run.
pub fn average_epochs<S: Scalar>(run: &RunRecord<S>, last_k: usize) -> Result<ParameterVector<S>> {
    average_last(&run.checkpoints, last_k)
}

/// Mean of the last `last_k` entries of an epoch-sorted checkpoint list.
pub fn average_last<S: Scalar>(checkpoints: &[(usize, ParameterVector<S>)], last_k: usize) -> Result<ParameterVector<S>> {
    let n = checkpoints.len();
    if last_k == 0 || last_k > n {
        return Err(Error::Precondition(format!(
            "cannot average the last {last_k} of {n} checkpoints"
        )));
    }
    let models: Vec<ParameterVector<S>> = checkpoints[n - last_k..].iter().map(|(_, p)| p.clone()).collect();
    average_naive(&models)
}

/// One permutation of hidden units per hidden layer; `perm[l][i]` is the
/// original unit placed at position `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationMap {
    pub layers: Vec<Vec<usize>>,
}

impl PermutationMap {
    pub fn identity(spec: &ModelSpec) -> Self {
        PermutationMap {
            layers: vec![(0..spec.hidden_width).collect(); spec.num_hidden_layers],
        }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.layers.len() != spec.num_hidden_layers {
            return Err(Error::Shape("one permutation per hidden layer expected".into()));
        }
        for p in &self.layers {
            let mut seen = vec![false; spec.hidden_width];
            if p.len() != spec.hidden_width {
                return Err(Error::Shape("permutation length differs from the width".into()));
            }
            for &i in p {
                if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidInput("not a bijection".into()));
                }
            }
        }
        Ok(())
    }
}

/// Reorders hidden units; the network computes the same function.
pub fn permute<S: Scalar>(params: &ParameterVector<S>, spec: &ModelSpec, perm: &PermutationMap) -> Result<ParameterVector<S>> {
    perm.validate(spec)?;
    if *params.layout() != spec.layout()? {
        return Err(Error::Shape("parameters do not match the model spec".into()));
    }
    let mut out = params.clone();
    let dims = spec.layer_dims();
    for (l, p) in perm.layers.iter().enumerate() {
        let (fan_in, _) = dims[l];
        let w = out.tensor(l, TensorKind::Weight).unwrap().to_vec();
        let b = out.tensor(l, TensorKind::Bias).unwrap().to_vec();
        let wt = out.tensor_mut(l, TensorKind::Weight).unwrap();
        for (i, &src) in p.iter().enumerate() {
            wt[i * fan_in..(i + 1) * fan_in].copy_from_slice(&w[src * fan_in..(src + 1) * fan_in]);
        }
        let bt = out.tensor_mut(l, TensorKind::Bias).unwrap();
        for (i, &src) in p.iter().enumerate() {
            bt[i] = b[src];
        }
        let (next_in, next_out) = dims[l + 1];
        let nw = out.tensor(l + 1, TensorKind::Weight).unwrap().to_vec();
        let nt = out.tensor_mut(l + 1, TensorKind::Weight).unwrap();
        for o in 0..next_out {
            for (i, &src) in p.iter().enumerate() {
                nt[o * next_in + i] = nw[o * next_in + src];
            }
        }
    }
    Ok(out)
}

/// Weight matching: layer by layer, assigns candidate units to reference
/// units so that the summed inner products of their incoming weights and
/// biases (after the upstream permutation) are maximal.
pub fn align_permutations<S: Scalar>(
    reference: &ParameterVector<S>,
    candidate: &ParameterVector<S>,
    spec: &ModelSpec,
) -> Result<(PermutationMap, ParameterVector<S>)> {
    let layout = spec.layout()?;
    if *reference.layout() != layout || *candidate.layout() != layout {
        return Err(Error::Shape("models do not match the model spec".into()));
    }
    let dims = spec.layer_dims();
    let mut current = candidate.clone();
    let mut layers = Vec::with_capacity(spec.num_hidden_layers);
    for l in 0..spec.num_hidden_layers {
        let (fan_in, width) = dims[l];
        let rw = reference.tensor(l, TensorKind::Weight).unwrap();
        let rb = reference.tensor(l, TensorKind::Bias).unwrap();
        let cw = current.tensor(l, TensorKind::Weight).unwrap();
        let cb = current.tensor(l, TensorKind::Bias).unwrap();
        let cost: Vec<Vec<f64>> = (0..width)
            .map(|i| {
                (0..width)
                    .map(|j| {
                        let dot: f64 = rw[i * fan_in..(i + 1) * fan_in]
                            .iter()
                            .zip(&cw[j * fan_in..(j + 1) * fan_in])
                            .map(|(a, b)| a.to_f64_lossy() * b.to_f64_lossy())
                            .sum();
                        -(dot + rb[i].to_f64_lossy() * cb[j].to_f64_lossy())
                    })
                    .collect()
            })
            .collect();
        let (assignment, _) = hungarian(&cost)?;
        let mut step = PermutationMap::identity(spec);
        step.layers[l] = assignment.clone();
        current = permute(&current, spec, &step)?;
        layers.push(assignment);
    }
    Ok((PermutationMap { layers }, current))
}

/// Aligns every model to the first, then averages.
pub fn average_aligned<S: Scalar>(models: &[ParameterVector<S>], spec: &ModelSpec) -> Result<ParameterVector<S>> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to average".into()))?;
    let mut aligned = vec![first.clone()];
    for m in &models[1..] {
        aligned.push(align_permutations(first, m, spec)?.1);
    }
    average_naive(&aligned)
}

/// Transfers `params` to a new task. With `reinit_head`, the output layer is
/// replaced by a fresh Kaiming-uniform layer sized for the target classes
/// (drawn from a stream of `config.seed`); the body is copied verbatim.
pub fn finetune<S: Scalar>(
    params: &ParameterVector<S>,
    spec: &ModelSpec,
    target: &DataSplits<S>,
    config: &TrainConfig,
    reinit_head: bool,
) -> Result<(ModelSpec, RunRecord<S>)> {
    let (new_spec, init) = transfer_init(params, spec, target, config.seed, reinit_head)?;
    let run = train_from(init, &new_spec, target, config)?;
    Ok((new_spec, run))
}

/// The starting point of [`finetune`], before any training.
pub fn transfer_init<S: Scalar>(
    params: &ParameterVector<S>,
    spec: &ModelSpec,
    target: &DataSplits<S>,
    seed: u64,
    reinit_head: bool,
) -> Result<(ModelSpec, ParameterVector<S>)> {
    if *params.layout() != spec.layout()? {
        return Err(Error::Shape("parameters do not match the model spec".into()));
    }
    if target.train.input_dim() != spec.input_dim {
        return Err(Error::Shape(format!(
            "target has {} input features, model expects {}",
            target.train.input_dim(),
            spec.input_dim
        )));
    }
    let classes = target.train.num_classes().max(target.test.num_classes());
    if !reinit_head {
        if classes != spec.output_dim {
            return Err(Error::Shape(format!(
                "target has {classes} classes, model has {} outputs; reinit_head is required",
                spec.output_dim
            )));
        }
        return Ok((spec.clone(), params.clone()));
    }
    let new_spec = ModelSpec {
        output_dim: classes,
        seed: mix_seed(seed, 0x4845_4144),
        ..spec.clone()
    };
    let fresh: ParameterVector<S> = build_model(&new_spec)?;
    let head = spec.num_layers() - 1;
    let mut init = fresh.clone();
    for l in 0..head {
        for kind in [TensorKind::Weight, TensorKind::Bias] {
            init.tensor_mut(l, kind)
                .unwrap()
                .copy_from_slice(params.tensor(l, kind).unwrap());
        }
    }
    Ok((new_spec, init))
}
