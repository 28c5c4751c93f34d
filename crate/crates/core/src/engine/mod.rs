//! Minimal CPU tensor engine: NCHW tensors, convolution layers, batch
//! normalization and activations, each with an explicit backward pass.

pub mod activation;
mod conv;
mod norm;
mod param;
mod scalar;
mod tensor;

pub use conv::{Conv2d, ConvSpec, ConvTranspose2d};
pub use norm::{BatchNorm2d, BatchNormCache, BN_EPS};
pub use param::Param;
pub use scalar::Scalar;
pub use tensor::Tensor;
