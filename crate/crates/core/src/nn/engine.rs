//! Forward pass, mean cross-entropy, reverse-mode gradient and
//! forward-over-reverse Hessian-vector products for [`ModelSpec`] networks.
//!
//! The reverse pass is written once, generic over [`Scalar`]. Hessian-vector
//! products evaluate that same pass on [`Dual`] parameters `θ + ε·v`; the
//! tangent of the resulting gradient is `H·v`, exact to rounding. ReLU uses
//! the subgradient 0 at 0, so curvature is the almost-everywhere Hessian.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::data::BatchRef;
use crate::nn::params::ParameterVector;
use crate::nn::spec::{Activation, ModelSpec};
use crate::scalar::{cast, Dual, Scalar};

struct Pass<T> {
    /// Input of each affine layer (`acts[0]` is the batch itself).
    acts: Vec<Vec<T>>,
    /// Pre-activation output of each affine layer; the last one is the logits.
    pres: Vec<Vec<T>>,
}

fn check_inputs<S: Scalar>(spec: &ModelSpec, params_len: usize, batch: &BatchRef<'_, S>) -> Result<()> {
    let expected = spec.param_count()?;
    if params_len != expected {
        return Err(Error::Shape(format!(
            "{params_len} parameters for a spec that needs {expected}"
        )));
    }
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if batch.input_dim != spec.input_dim {
        return Err(Error::Shape(format!(
            "batch input dimension {} but spec expects {}",
            batch.input_dim, spec.input_dim
        )));
    }
    if batch.inputs.len() != batch.labels.len() * batch.input_dim {
        return Err(Error::Shape("batch inputs and labels disagree in length".into()));
    }
    if let Some(bad) = batch.labels.iter().find(|&&l| l >= spec.output_dim) {
        return Err(Error::Shape(format!(
            "label {bad} outside the {} model outputs",
            spec.output_dim
        )));
    }
    Ok(())
}

fn check_layout<S: Scalar>(params: &ParameterVector<S>, spec: &ModelSpec) -> Result<()> {
    if *params.layout() != spec.layout()? {
        return Err(Error::Shape("parameter layout does not match the model spec".into()));
    }
    Ok(())
}

#[inline]
fn activate<T: Scalar>(act: Activation, z: T) -> T {
    match act {
        Activation::Relu => {
            if z > T::zero() {
                z
            } else {
                T::zero()
            }
        }
        Activation::Tanh => z.tanh(),
    }
}

fn forward_pass<T: Scalar, X: Scalar>(
    w: &[T],
    spec: &ModelSpec,
    inputs: &[X],
    n: usize,
) -> Result<Pass<T>> {
    let dims = spec.layer_dims();
    let last = dims.len() - 1;
    let mut acts: Vec<Vec<T>> = Vec::with_capacity(dims.len());
    let mut pres: Vec<Vec<T>> = Vec::with_capacity(dims.len());
    acts.push(inputs.iter().map(|&x| cast::<X, T>(x)).collect());
    let mut off = 0;
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let weight = &w[off..off + fan_in * fan_out];
        let bias = &w[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
        off += fan_in * fan_out + fan_out;
        let a = &acts[l];
        let mut z = vec![T::zero(); n * fan_out];
        for i in 0..n {
            let ai = &a[i * fan_in..(i + 1) * fan_in];
            let zi = &mut z[i * fan_out..(i + 1) * fan_out];
            for (o, zo) in zi.iter_mut().enumerate() {
                let wo = &weight[o * fan_in..(o + 1) * fan_in];
                let mut s = bias[o];
                for (&wk, &ak) in wo.iter().zip(ai) {
                    s += wk * ak;
                }
                *zo = s;
            }
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow { layer: l });
        }
        if l < last {
            acts.push(z.iter().map(|&v| activate(spec.activation, v)).collect());
        }
        pres.push(z);
    }
    Ok(Pass { acts, pres })
}

/// Mean cross-entropy of row-major logits; optionally writes `∂loss/∂logits`.
fn cross_entropy<T: Scalar>(
    logits: &[T],
    labels: &[usize],
    classes: usize,
    mut dlogits: Option<&mut [T]>,
) -> (T, usize) {
    let n = labels.len();
    let inv_n = T::one() / T::lit(n as f64);
    let mut total = T::zero();
    let mut correct = 0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &logits[i * classes..(i + 1) * classes];
        let mut m = row[0];
        let mut arg = 0;
        for (c, &v) in row.iter().enumerate().skip(1) {
            if v > m {
                m = v;
                arg = c;
            }
        }
        if arg == y {
            correct += 1;
        }
        let mut sum = T::zero();
        for &v in row {
            sum += (v - m).exp();
        }
        let lse = m + sum.ln();
        total += lse - row[y];
        if let Some(d) = dlogits.as_deref_mut() {
            let di = &mut d[i * classes..(i + 1) * classes];
            for (c, (dc, &v)) in di.iter_mut().zip(row).enumerate() {
                let p = (v - lse).exp();
                let target = if c == y { T::one() } else { T::zero() };
                *dc = (p - target) * inv_n;
            }
        }
    }
    (total * inv_n, correct)
}

pub(crate) fn loss_and_grad_slice<T: Scalar, X: Scalar>(
    w: &[T],
    spec: &ModelSpec,
    inputs: &[X],
    labels: &[usize],
) -> Result<(T, usize, Vec<T>)> {
    let n = labels.len();
    let pass = forward_pass(w, spec, inputs, n)?;
    let dims = spec.layer_dims();
    let classes = spec.output_dim;
    let mut dz = vec![T::zero(); n * classes];
    let (loss, correct) = cross_entropy(pass.pres.last().unwrap(), labels, classes, Some(&mut dz));
    if !loss.is_finite() {
        return Err(Error::NumericOverflow {
            layer: dims.len() - 1,
        });
    }

    let mut offsets = Vec::with_capacity(dims.len());
    let mut off = 0;
    for &(fi, fo) in &dims {
        offsets.push(off);
        off += fi * fo + fo;
    }

    let mut grad = vec![T::zero(); w.len()];
    for l in (0..dims.len()).rev() {
        let (fan_in, fan_out) = dims[l];
        let a = &pass.acts[l];
        let base = offsets[l];
        {
            let (gw, gb) = grad[base..base + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            for i in 0..n {
                let ai = &a[i * fan_in..(i + 1) * fan_in];
                let dzi = &dz[i * fan_out..(i + 1) * fan_out];
                for (o, &g) in dzi.iter().enumerate() {
                    gb[o] += g;
                    let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                    for (r, &ak) in row.iter_mut().zip(ai) {
                        *r += g * ak;
                    }
                }
            }
            if gw.iter().chain(gb.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { layer: l });
            }
        }
        if l == 0 {
            break;
        }
        let weight = &w[base..base + fan_in * fan_out];
        let prev_pre = &pass.pres[l - 1];
        let mut dprev = vec![T::zero(); n * fan_in];
        for i in 0..n {
            let dzi = &dz[i * fan_out..(i + 1) * fan_out];
            let di = &mut dprev[i * fan_in..(i + 1) * fan_in];
            for (o, &g) in dzi.iter().enumerate() {
                let wo = &weight[o * fan_in..(o + 1) * fan_in];
                for (d, &wk) in di.iter_mut().zip(wo) {
                    *d += g * wk;
                }
            }
            let zi = &prev_pre[i * fan_in..(i + 1) * fan_in];
            let ai = &a[i * fan_in..(i + 1) * fan_in];
            for k in 0..fan_in {
                di[k] = match spec.activation {
                    Activation::Relu => {
                        if zi[k] > T::zero() {
                            di[k]
                        } else {
                            T::zero()
                        }
                    }
                    Activation::Tanh => di[k] * (T::one() - ai[k] * ai[k]),
                };
            }
        }
        dz = dprev;
    }
    Ok((loss, correct, grad))
}

pub(crate) fn loss_slice<T: Scalar, X: Scalar>(
    w: &[T],
    spec: &ModelSpec,
    inputs: &[X],
    labels: &[usize],
) -> Result<(T, usize)> {
    let pass = forward_pass(w, spec, inputs, labels.len())?;
    let (loss, correct) = cross_entropy(pass.pres.last().unwrap(), labels, spec.output_dim, None);
    if !loss.is_finite() {
        return Err(Error::NumericOverflow {
            layer: spec.num_layers() - 1,
        });
    }
    Ok((loss, correct))
}

pub(crate) fn hvp_slice<S: Scalar>(
    w: &[S],
    spec: &ModelSpec,
    inputs: &[S],
    labels: &[usize],
    v: &[S],
) -> Result<Vec<S>> {
    let dual: Vec<Dual<S>> = w.iter().zip(v).map(|(&a, &b)| Dual::new(a, b)).collect();
    let (_, _, g) = loss_and_grad_slice::<Dual<S>, S>(&dual, spec, inputs, labels)?;
    Ok(g.into_iter().map(|d| d.eps).collect())
}

pub(crate) fn logits_slice<S: Scalar>(
    w: &[S],
    spec: &ModelSpec,
    inputs: &[S],
    n: usize,
) -> Result<Matrix<S>> {
    let pass = forward_pass(w, spec, inputs, n)?;
    Matrix::from_vec(n, spec.output_dim, pass.pres.into_iter().last().unwrap())
}

/// Logits for every row of `batch` (`b × output_dim`).
pub fn forward<S: Scalar>(
    params: &ParameterVector<S>,
    spec: &ModelSpec,
    batch: BatchRef<'_, S>,
) -> Result<Matrix<S>> {
    check_layout(params, spec)?;
    check_inputs(spec, params.len(), &batch)?;
    logits_slice(params.values(), spec, batch.inputs, batch.len())
}

/// Mean cross-entropy over the batch.
pub fn loss<S: Scalar>(params: &ParameterVector<S>, spec: &ModelSpec, batch: BatchRef<'_, S>) -> Result<S> {
    loss_and_correct(params, spec, batch).map(|(l, _)| l)
}

/// Mean cross-entropy and the number of rows whose argmax logit is the label.
pub fn loss_and_correct<S: Scalar>(
    params: &ParameterVector<S>,
    spec: &ModelSpec,
    batch: BatchRef<'_, S>,
) -> Result<(S, usize)> {
    check_layout(params, spec)?;
    check_inputs(spec, params.len(), &batch)?;
    loss_slice(params.values(), spec, batch.inputs, batch.labels)
}

pub fn loss_and_grad<S: Scalar>(
    params: &ParameterVector<S>,
    spec: &ModelSpec,
    batch: BatchRef<'_, S>,
) -> Result<(S, ParameterVector<S>)> {
    check_layout(params, spec)?;
    check_inputs(spec, params.len(), &batch)?;
    let (loss, _, grad) = loss_and_grad_slice::<S, S>(params.values(), spec, batch.inputs, batch.labels)?;
    Ok((loss, params.with_values(grad)?))
}

/// Hessian of the mean batch loss applied to `v`.
pub fn hvp<S: Scalar>(
    params: &ParameterVector<S>,
    spec: &ModelSpec,
    batch: BatchRef<'_, S>,
    v: &ParameterVector<S>,
) -> Result<ParameterVector<S>> {
    check_layout(params, spec)?;
    params.ensure_same_layout(v)?;
    check_inputs(spec, params.len(), &batch)?;
    let hv = hvp_slice(params.values(), spec, batch.inputs, batch.labels, v.values())?;
    params.with_values(hv)
}

/// Central-difference Hessian-vector product, `(∇L(θ+εv) − ∇L(θ−εv)) / 2ε`.
///
/// Only meant as a test oracle for [`hvp`].
pub fn hvp_finite_difference<S: Scalar>(
    params: &ParameterVector<S>,
    spec: &ModelSpec,
    batch: BatchRef<'_, S>,
    v: &ParameterVector<S>,
    eps: S,
) -> Result<ParameterVector<S>> {
    let mut plus = params.clone();
    plus.axpy(eps, v);
    let mut minus = params.clone();
    minus.axpy(-eps, v);
    let (_, gp) = loss_and_grad(&plus, spec, batch)?;
    let (_, gm) = loss_and_grad(&minus, spec, batch)?;
    let two_eps = eps + eps;
    let out = gp
        .values()
        .iter()
        .zip(gm.values())
        .map(|(&a, &b)| (a - b) / two_eps)
        .collect();
    params.with_values(out)
}
