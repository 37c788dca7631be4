use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::spec::{InitScheme, ModelSpec};
use crate::scalar::{cast, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    Weight,
    Bias,
}

/// One tensor inside a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorSlot {
    pub layer: usize,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSlot {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.numel()
    }
}

/// Ordered descriptor of every tensor in a [`ParameterVector`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Layout {
    slots: Vec<TensorSlot>,
}

impl Layout {
    /// Offsets must be contiguous, start at zero and not overlap.
    pub fn new(slots: Vec<TensorSlot>) -> Result<Self> {
        let mut expected = 0;
        for (i, s) in slots.iter().enumerate() {
            if s.offset != expected {
                return Err(Error::Shape(format!(
                    "layout slot {i} starts at {} but previous slots end at {expected}",
                    s.offset
                )));
            }
            if s.numel() == 0 {
                return Err(Error::Shape(format!("layout slot {i} is empty")));
            }
            expected += s.numel();
        }
        Ok(Layout { slots })
    }

    /// A single weight tensor of length `n`; handy for surrogate objectives
    /// that are not networks.
    pub fn flat(n: usize) -> Result<Self> {
        Layout::new(vec![TensorSlot {
            layer: 0,
            kind: TensorKind::Weight,
            shape: vec![n],
            offset: 0,
        }])
    }

    pub fn slots(&self) -> &[TensorSlot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.last().map_or(0, |s| s.offset + s.numel())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_layers(&self) -> usize {
        self.slots.iter().map(|s| s.layer + 1).max().unwrap_or(0)
    }

    pub fn slot(&self, layer: usize, kind: TensorKind) -> Option<&TensorSlot> {
        self.slots
            .iter()
            .find(|s| s.layer == layer && s.kind == kind)
    }

    /// Number of entries that are weights (biases excluded).
    pub fn weight_count(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| s.kind == TensorKind::Weight)
            .map(TensorSlot::numel)
            .sum()
    }
}

/// Flat, deterministically ordered vector of all learnable weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector<S> {
    values: Vec<S>,
    layout: Layout,
}

impl<S: Scalar> ParameterVector<S> {
    pub fn new(values: Vec<S>, layout: Layout) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Shape(format!(
                "{} values for a layout of {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(ParameterVector { values, layout })
    }

    pub fn zeros(layout: Layout) -> Self {
        ParameterVector {
            values: vec![S::zero(); layout.len()],
            layout,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layout.clone())
    }

    /// Reuses this vector's layout for new values of the same length.
    pub fn with_values(&self, values: Vec<S>) -> Result<Self> {
        Self::new(values, self.layout.clone())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn tensor(&self, layer: usize, kind: TensorKind) -> Option<&[S]> {
        self.layout
            .slot(layer, kind)
            .map(|s| &self.values[s.range()])
    }

    pub fn tensor_mut(&mut self, layer: usize, kind: TensorKind) -> Option<&mut [S]> {
        let range = self.layout.slot(layer, kind)?.range();
        Some(&mut self.values[range])
    }

    /// Splits into one owned buffer per layout slot.
    pub fn unflatten(&self) -> Vec<Vec<S>> {
        self.layout
            .slots()
            .iter()
            .map(|s| self.values[s.range()].to_vec())
            .collect()
    }

    pub fn flatten(tensors: &[Vec<S>], layout: Layout) -> Result<Self> {
        if tensors.len() != layout.slots().len() {
            return Err(Error::Shape(format!(
                "{} tensors for {} layout slots",
                tensors.len(),
                layout.slots().len()
            )));
        }
        let mut values = Vec::with_capacity(layout.len());
        for (t, slot) in tensors.iter().zip(layout.slots()) {
            if t.len() != slot.numel() {
                return Err(Error::Shape(format!(
                    "tensor for layer {} has {} entries, expected {}",
                    slot.layer,
                    t.len(),
                    slot.numel()
                )));
            }
            values.extend_from_slice(t);
        }
        Self::new(values, layout)
    }

    pub fn ensure_same_layout(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::Shape("parameter layouts differ".into()));
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> S {
        self.values
            .iter()
            .zip(&other.values)
            .fold(S::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, a: S) -> Self {
        ParameterVector {
            values: self.values.iter().map(|&x| x * a).collect(),
            layout: self.layout.clone(),
        }
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: S, x: &Self) {
        for (y, &xi) in self.values.iter_mut().zip(&x.values) {
            *y += a * xi;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn cast<T: Scalar>(&self) -> ParameterVector<T> {
        ParameterVector {
            values: self.values.iter().map(|&v| cast(v)).collect(),
            layout: self.layout.clone(),
        }
    }
}

/// Initializes a network for `spec`.
///
/// Weights follow Kaiming-uniform fan-in bounds `gain·sqrt(3/fan_in)`, biases
/// `U(±1/sqrt(fan_in))`. Draws come from a ChaCha stream seeded by
/// `spec.seed` in layout order and are made in 64-bit before casting, so
/// every scalar type sees the same initial network.
pub fn build_model<S: Scalar>(spec: &ModelSpec) -> Result<ParameterVector<S>> {
    let layout = spec.layout()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(layout.len());
    match spec.init_scheme {
        InitScheme::KaimingUniform => {
            for slot in layout.slots() {
                let fan_in = spec.layer_dims()[slot.layer].0 as f64;
                let bound = match slot.kind {
                    TensorKind::Weight => spec.activation.gain() * (3.0 / fan_in).sqrt(),
                    TensorKind::Bias => 1.0 / fan_in.sqrt(),
                };
                for _ in 0..slot.numel() {
                    let u: f64 = rng.random_range(-bound..bound);
                    values.push(S::lit(u));
                }
            }
        }
    }
    ParameterVector::new(values, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::Activation;
    use proptest::prelude::*;

    #[test]
    fn build_is_deterministic_and_bounded() {
        let spec = ModelSpec::new(3, 8, 2, 4, Activation::Relu, 11);
        let a: ParameterVector<f64> = build_model(&spec).unwrap();
        let b: ParameterVector<f64> = build_model(&spec).unwrap();
        assert_eq!(a.values(), b.values());
        let w0 = a.tensor(0, TensorKind::Weight).unwrap();
        let bound = 2f64.sqrt() * (3.0f64 / 3.0).sqrt();
        assert!(w0.iter().all(|w| w.abs() <= bound));
        let other: ParameterVector<f64> = build_model(&spec.with_seed(12)).unwrap();
        assert_ne!(a.values(), other.values());
    }

    #[test]
    fn f32_build_is_rounded_f64_build() {
        let spec = ModelSpec::new(2, 5, 1, 3, Activation::Tanh, 3);
        let a: ParameterVector<f64> = build_model(&spec).unwrap();
        let b: ParameterVector<f32> = build_model(&spec).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(*x as f32, *y);
        }
    }

    #[test]
    fn layout_rejects_gaps() {
        let slots = vec![
            TensorSlot {
                layer: 0,
                kind: TensorKind::Weight,
                shape: vec![2, 2],
                offset: 0,
            },
            TensorSlot {
                layer: 0,
                kind: TensorKind::Bias,
                shape: vec![2],
                offset: 5,
            },
        ];
        assert!(Layout::new(slots).is_err());
    }

    proptest! {
        #[test]
        fn flatten_unflatten_round_trip(
            input in 1usize..5, width in 1usize..7, depth in 1usize..4,
            out in 1usize..4, seed in any::<u64>()
        ) {
            let spec = ModelSpec::new(input, width, depth, out, Activation::Relu, seed);
            let p: ParameterVector<f64> = build_model(&spec).unwrap();
            let layout = p.layout().clone();
            let slots = layout.slots();
            prop_assert_eq!(slots[0].offset, 0);
            for pair in slots.windows(2) {
                prop_assert_eq!(pair[0].offset + pair[0].numel(), pair[1].offset);
            }
            prop_assert_eq!(layout.len(), spec.param_count().unwrap());
            let back = ParameterVector::flatten(&p.unflatten(), layout).unwrap();
            let bits: Vec<u64> = back.values().iter().map(|v| v.to_bits()).collect();
            let orig: Vec<u64> = p.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, orig);
        }
    }
}
