//! Slice-scan selective state-space segmentation.
//!
//! A desk-scale encoder/decoder segmentation network whose mixing
//! primitive scans feature maps as slice-ordered 1-D sequences processed
//! by selective state-space kernels, plus the training loop, evaluation
//! metrics, a one-shot supernet / evolutionary search over per-block
//! slice shapes, and a deterministic synthetic data harness.
//!
//! All numeric kernels are generic over the scalar type; `f32` is the
//! training and checkpoint carrier, `f64` backs gradient checking and
//! the discretization oracles.

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod data;
pub mod metrics;
pub mod nas;
pub mod net;
pub mod train;
pub mod scalar;
pub mod scan;
pub mod ssm;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default training/checkpoint element type.
pub type Elem = f32;
/// Tensor in the training carrier type.
pub type Tensor32 = tensor::Tensor<f32>;
/// Double-precision tensor, used by oracles and gradient checks.
pub type Tensor64 = tensor::Tensor<f64>;
/// Autodiff node in the training carrier type.
pub type Var32 = autodiff::Var<f32>;
pub type Var64 = autodiff::Var<f64>;
