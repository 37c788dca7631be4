//! Deterministic minibatch SGD with momentum, weight decay and a one-cycle
//! cosine learning-rate schedule.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::engine::loss_and_grad_slice;
use crate::nn::{build_model, DataSplits, Dataset, ModelSpec, ParameterVector};
use crate::rng::substream;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    OneCycleCosine,
    Constant,
}

fn default_warmup_divisor() -> f64 {
    25.0
}

fn default_final_divisor() -> f64 {
    1e4
}

fn default_checkpoint_every() -> usize {
    5
}

/// Training hyperparameters. `batch_size` is the temperature-like axis of a
/// zoo: smaller batches train noisier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    #[serde(default)]
    pub schedule: Schedule,
    pub warmup_fraction: f64,
    /// Warmup starts at `peak_lr / warmup_divisor`.
    #[serde(default = "default_warmup_divisor")]
    pub warmup_divisor: f64,
    /// Cosine phase ends at `peak_lr / final_divisor`.
    #[serde(default = "default_final_divisor")]
    pub final_divisor: f64,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    pub seed: u64,
    /// Replace the running-mean train statistics by a full post-epoch pass.
    #[serde(default)]
    pub strict_eval: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            peak_lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            schedule: Schedule::OneCycleCosine,
            warmup_fraction: 0.3,
            warmup_divisor: default_warmup_divisor(),
            final_divisor: default_final_divisor(),
            checkpoint_every: default_checkpoint_every(),
            seed: 0,
            strict_eval: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.peak_lr >= 0.0) || !self.peak_lr.is_finite() {
            return bad("peak_lr must be finite and nonnegative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1)");
        }
        if !(self.warmup_divisor >= 1.0) || !(self.final_divisor >= 1.0) {
            return bad("schedule divisors must be at least 1");
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be positive");
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n_train: usize) -> usize {
        n_train.div_ceil(self.batch_size)
    }

    pub fn with_batch_size(&self, batch_size: usize) -> Self {
        TrainConfig {
            batch_size,
            ..self.clone()
        }
    }
}

/// Learning rate for update `step` of `total_steps`.
///
/// One-cycle: linear warmup from `peak/warmup_divisor` to `peak` over the
/// first `round(warmup_fraction · total)` steps, then cosine decay reaching
/// `peak/final_divisor` at `step = total_steps`.
pub fn lr_at(config: &TrainConfig, step: usize, total_steps: usize) -> Result<f64> {
    if step > total_steps {
        return Err(Error::Precondition(format!(
            "step {step} beyond total_steps {total_steps}"
        )));
    }
    let peak = config.peak_lr;
    if config.schedule == Schedule::Constant {
        return Ok(peak);
    }
    let start = peak / config.warmup_divisor;
    let end = peak / config.final_divisor;
    let warm = (config.warmup_fraction * total_steps as f64).round() as usize;
    if step < warm {
        return Ok(start + (peak - start) * step as f64 / warm as f64);
    }
    if step == total_steps && total_steps > warm {
        return Ok(end);
    }
    if total_steps == warm {
        return Ok(peak);
    }
    let progress = (step - warm) as f64 / (total_steps - warm) as f64;
    Ok(peak - (peak - end) * 0.5 * (1.0 - (PI * progress).cos()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub lr: f64,
}

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord<S> {
    pub history: Vec<EpochRecord>,
    /// Sorted by epoch; always starts with epoch 0.
    pub checkpoints: Vec<(usize, ParameterVector<S>)>,
    pub final_record: EpochRecord,
    pub generalization_gap: f64,
    /// First epoch whose loss or parameters went non-finite.
    pub diverged_at: Option<usize>,
}

impl<S: Scalar> RunRecord<S> {
    pub fn final_params(&self) -> &ParameterVector<S> {
        &self.checkpoints.last().expect("epoch 0 checkpoint").1
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            history: self.history.clone(),
            final_record: self.final_record.clone(),
            generalization_gap: self.generalization_gap,
            diverged_at: self.diverged_at,
            checkpoint_epochs: self.checkpoints.iter().map(|(e, _)| *e).collect(),
        }
    }
}

/// Checkpoint-free part of a [`RunRecord`], as persisted in `results.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub history: Vec<EpochRecord>,
    #[serde(rename = "final")]
    pub final_record: EpochRecord,
    pub generalization_gap: f64,
    pub diverged_at: Option<usize>,
    pub checkpoint_epochs: Vec<usize>,
}

/// Full-split mean cross-entropy and top-1 accuracy.
pub fn evaluate<S: Scalar>(params: &ParameterVector<S>, spec: &ModelSpec, split: &Dataset<S>) -> Result<(f64, f64)> {
    if split.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate on an empty split".into()));
    }
    let (loss, correct) = crate::nn::loss_and_correct(params, spec, split.view())?;
    Ok((loss.to_f64_lossy(), correct as f64 / split.len() as f64))
}

fn check_data<S: Scalar>(spec: &ModelSpec, data: &DataSplits<S>, config: &TrainConfig) -> Result<()> {
    for d in [&data.train, &data.test] {
        if d.input_dim() != spec.input_dim {
            return Err(Error::Shape(format!(
                "data has {} input features, model expects {}",
                d.input_dim(),
                spec.input_dim
            )));
        }
        if d.num_classes() > spec.output_dim {
            return Err(Error::Shape(format!(
                "data has {} classes, model has {} outputs",
                d.num_classes(),
                spec.output_dim
            )));
        }
    }
    if config.batch_size > data.train.len() {
        return Err(Error::InvalidInput(format!(
            "batch_size {} exceeds the {} training samples",
            config.batch_size,
            data.train.len()
        )));
    }
    Ok(())
}

/// Trains a freshly initialized network for `spec`.
pub fn train<S: Scalar>(spec: &ModelSpec, data: &DataSplits<S>, config: &TrainConfig) -> Result<RunRecord<S>> {
    let init = build_model(spec)?;
    train_from(init, spec, data, config)
}

/// Trains starting from `init`. Shuffling is a pure function of
/// `(config.seed, epoch)`, so replays are bit-identical.
pub fn train_from<S: Scalar>(
    init: ParameterVector<S>,
    spec: &ModelSpec,
    data: &DataSplits<S>,
    config: &TrainConfig,
) -> Result<RunRecord<S>> {
    config.validate()?;
    check_data(spec, data, config)?;
    if *init.layout() != spec.layout()? {
        return Err(Error::Shape("initial parameters do not match the model spec".into()));
    }
    let n = data.train.len();
    let steps_per_epoch = config.steps_per_epoch(n);
    let total_steps = config.epochs * steps_per_epoch;

    let mut params = init;
    let mut velocity = vec![S::zero(); params.len()];
    let momentum = S::lit(config.momentum);
    let decay = S::lit(config.weight_decay);
    let mut checkpoints = vec![(0, params.clone())];
    let mut history: Vec<EpochRecord> = Vec::with_capacity(config.epochs);
    let mut diverged_at = None;
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;

    'epochs: for epoch in 1..=config.epochs {
        order.sort_unstable();
        order.shuffle(&mut substream(config.seed, epoch as u64));
        let epoch_start = params.clone();
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut lr = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = data.train.gather(chunk);
            let outcome = loss_and_grad_slice::<S, S>(params.values(), spec, &batch.inputs, &batch.labels);
            let (loss, hits, grad) = match outcome {
                Ok(v) => v,
                Err(Error::NumericOverflow { .. }) => {
                    params = epoch_start;
                    diverged_at = Some(epoch);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            lr = lr_at(config, step, total_steps)?;
            let lr_s = S::lit(lr);
            for ((p, v), g) in params.values_mut().iter_mut().zip(velocity.iter_mut()).zip(grad) {
                let g = g + decay * *p;
                *v = momentum * *v + g;
                *p -= lr_s * *v;
            }
            if !params.is_finite() {
                params = epoch_start;
                diverged_at = Some(epoch);
                break 'epochs;
            }
            loss_sum += loss.to_f64_lossy() * chunk.len() as f64;
            correct += hits;
            step += 1;
        }
        let (train_loss, train_acc) = if config.strict_eval {
            match evaluate(&params, spec, &data.train) {
                Ok(v) => v,
                Err(Error::NumericOverflow { .. }) => {
                    params = epoch_start;
                    diverged_at = Some(epoch);
                    break;
                }
                Err(e) => return Err(e),
            }
        } else {
            (loss_sum / n as f64, correct as f64 / n as f64)
        };
        let (test_loss, test_acc) = match evaluate(&params, spec, &data.test) {
            Ok(v) => v,
            Err(Error::NumericOverflow { .. }) => {
                params = epoch_start;
                diverged_at = Some(epoch);
                break;
            }
            Err(e) => return Err(e),
        };
        if !train_loss.is_finite() || !test_loss.is_finite() {
            params = epoch_start;
            diverged_at = Some(epoch);
            break;
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            train_acc,
            test_loss,
            test_acc,
            lr,
        });
        if epoch % config.checkpoint_every == 0 || epoch == config.epochs {
            checkpoints.push((epoch, params.clone()));
        }
    }

    let final_record = match history.last() {
        Some(r) => r.clone(),
        None => {
            let p0 = &checkpoints[0].1;
            let (train_loss, train_acc) = evaluate(p0, spec, &data.train)?;
            let (test_loss, test_acc) = evaluate(p0, spec, &data.test)?;
            EpochRecord {
                epoch: 0,
                train_loss,
                train_acc,
                test_loss,
                test_acc,
                lr: lr_at(config, 0, total_steps)?,
            }
        }
    };
    if diverged_at.is_some() {
        // keep the parameters of the last finite epoch as the final checkpoint
        let last_epoch = final_record.epoch;
        if checkpoints.last().map(|(e, _)| *e) != Some(last_epoch) {
            checkpoints.push((last_epoch, params));
        }
    }
    let generalization_gap = final_record.test_loss - final_record.train_loss;
    Ok(RunRecord {
        history,
        checkpoints,
        final_record,
        generalization_gap,
        diverged_at,
    })
}
