//! PAC-Bayes margin bounds for ReLU networks with curvature-aware posteriors.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the double-precision types used by the experiment drivers.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound;
pub mod concentration;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Dataset = dataset::LabeledDataset<f64>;
pub type Mlp = network::MlpParams<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type TrainConfig = trainer::TrainConfig<f64>;
pub type BoundConfig = bound::BoundConfig<f64>;
pub type BoundReport = bound::BoundReport<f64>;
