use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::{Layout, TensorKind, TensorSlot};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    /// Gain used by Kaiming initialization for this nonlinearity.
    pub fn gain(self) -> f64 {
        match self {
            Activation::Relu => std::f64::consts::SQRT_2,
            Activation::Tanh => 5.0 / 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    #[default]
    KaimingUniform,
}

/// Architecture of a fully connected network.
///
/// `hidden_width` is the load-like axis of a zoo: wider networks carry a
/// lower load for the same data.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub num_hidden_layers: usize,
    pub output_dim: usize,
    pub activation: Activation,
    #[serde(default)]
    pub init_scheme: InitScheme,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(
        input_dim: usize,
        hidden_width: usize,
        num_hidden_layers: usize,
        output_dim: usize,
        activation: Activation,
        seed: u64,
    ) -> Self {
        ModelSpec {
            input_dim,
            hidden_width,
            num_hidden_layers,
            output_dim,
            activation,
            init_scheme: InitScheme::KaimingUniform,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("hidden_width", self.hidden_width),
            ("num_hidden_layers", self.num_hidden_layers),
            ("output_dim", self.output_dim),
        ] {
            if v == 0 {
                return Err(Error::InvalidSpec(format!("{name} must be positive")));
            }
        }
        self.checked_param_count()
            .map(|_| ())
            .ok_or_else(|| Error::InvalidSpec("parameter count overflows".into()))
    }

    fn checked_param_count(&self) -> Option<usize> {
        let w = self.hidden_width;
        let first = self.input_dim.checked_mul(w)?.checked_add(w)?;
        let hidden = w
            .checked_mul(w)?
            .checked_add(w)?
            .checked_mul(self.num_hidden_layers.checked_sub(1)?)?;
        let head = w
            .checked_mul(self.output_dim)?
            .checked_add(self.output_dim)?;
        first.checked_add(hidden)?.checked_add(head)
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> Result<usize> {
        self.validate()?;
        Ok(self.checked_param_count().unwrap())
    }

    /// `(fan_in, fan_out)` for every affine layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.num_hidden_layers + 1);
        dims.push((self.input_dim, self.hidden_width));
        for _ in 1..self.num_hidden_layers {
            dims.push((self.hidden_width, self.hidden_width));
        }
        dims.push((self.hidden_width, self.output_dim));
        dims
    }

    pub fn num_layers(&self) -> usize {
        self.num_hidden_layers + 1
    }

    /// Flat parameter layout: per layer the `out × in` weight matrix
    /// (row-major), then the bias.
    pub fn layout(&self) -> Result<Layout> {
        self.validate()?;
        let mut slots = Vec::with_capacity(2 * self.num_layers());
        let mut offset = 0;
        for (layer, (fan_in, fan_out)) in self.layer_dims().into_iter().enumerate() {
            slots.push(TensorSlot {
                layer,
                kind: TensorKind::Weight,
                shape: vec![fan_out, fan_in],
                offset,
            });
            offset += fan_in * fan_out;
            slots.push(TensorSlot {
                layer,
                kind: TensorKind::Bias,
                shape: vec![fan_out],
                offset,
            });
            offset += fan_out;
        }
        Layout::new(slots)
    }

    pub fn with_width(&self, width: usize) -> Self {
        ModelSpec {
            hidden_width: width,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ModelSpec {
            seed,
            ..self.clone()
        }
    }
}
