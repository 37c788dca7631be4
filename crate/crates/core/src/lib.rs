//! Model zoos over a load × temperature grid of small MLPs, with
//! loss-landscape metrics, five-phase classification and phase-aware
//! downstream procedures.
//!
//! Numerical code is generic over [`Scalar`] (`f32`, `f64`, or the [`Dual`]
//! numbers used for Hessian-vector products); the aliases at the crate root
//! fix the 64-bit precision used by training and metrics.

pub mod downstream;
pub mod error;
pub mod hpo;
pub mod landscape;
pub mod matrix;
pub mod nn;
pub mod phase;
pub mod probe;
pub mod rng;
pub mod scalar;
pub mod train;
pub mod zoo;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::{Dual, Scalar};

pub type Params = nn::ParameterVector<f64>;
pub type Params32 = nn::ParameterVector<f32>;
pub type Data = nn::Dataset<f64>;
pub type Splits = nn::DataSplits<f64>;
