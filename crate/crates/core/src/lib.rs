//! Convolutional network training with structural optimization of kernel
//! counts: kernels are split (by Gaussian noise or rotation), fine-tuned with
//! SGD, and merged back by k-means clustering.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod kmeans;
pub mod layers;
pub mod surgery;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result, ValidationReport};
pub use tensor::Tensor;
