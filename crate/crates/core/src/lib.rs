//! Geographically conditioned regression with a trainable location–time
//! encoder and a proxy consistency loss.
//!
//! An observation encoder and a location–time encoder are fused by
//! concatenating their embeddings ahead of a prediction head. A second head
//! reconstructs gridded proxy variables from the location embedding alone;
//! its squared error is added to the prediction loss with weight `λ`, and its
//! gradient only reaches the location encoder and the proxy head. Proxy points
//! are drawn independently of labeled samples, `ρ` of them per label.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`, which the training pipeline uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod error;
pub mod experiment;
pub mod geo;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod splits;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = autodiff::Tensor<f64>;
pub type Graph = autodiff::Graph<f64>;
pub type ParamSet = autodiff::ParamSet<f64>;
pub type OptimizerState = autodiff::OptimizerState<f64>;
pub type Checkpoint = autodiff::Checkpoint<f64>;
