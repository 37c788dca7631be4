//! Multilayer-perceptron engine and the datasets it trains on.

pub mod data;
pub mod engine;
pub mod params;
pub mod spec;

pub use data::{
    load_csv, make_gaussian_mixture, make_spirals, Batch, BatchRef, CsvSchema, DataSource,
    DataSplits, Dataset, Generator, Split,
};
pub use engine::{forward, hvp, hvp_finite_difference, loss, loss_and_correct, loss_and_grad};
pub use params::{build_model, Layout, ParameterVector, TensorKind, TensorSlot};
pub use spec::{Activation, InitScheme, ModelSpec};
