//! Minimal deterministic tensor/layer engine with exact analytic gradients.
//!
//! The layer vocabulary is fixed to what the network architectures need.
//! Training runs in f32; gradient checks instantiate the same code in f64.
//! Forward, backward and the optimizer are deterministic for fixed inputs
//! regardless of worker-thread count.

pub mod layers;
pub mod optim;
pub mod tensor;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use layers::{BatchNorm2d, Conv2d, Layer, LayerCache, Linear, Mode, Stack};
pub use optim::{adam_step, mse_loss, AdamState};
pub use tensor::{Scalar, Tensor};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error at layer {layer}: {message}")]
    Shape { layer: usize, message: String },
    #[error("non-finite value: {context}")]
    NonFinite { context: String },
    #[error("backward called without a matching forward cache")]
    MissingCache,
    #[error("engine config: {0}")]
    Config(String),
}

/// Conv layer with Kaiming fan-in init, zero bias. 5x5, stride 1, pad 2.
pub fn conv5x5<S: Scalar, R: Rng>(in_ch: usize, out_ch: usize, rng: &mut R) -> Layer<S> {
    let kernel = 5;
    let fan_in = in_ch * kernel * kernel;
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let weight = Tensor::from_vec(
        &[out_ch, fan_in],
        (0..out_ch * fan_in)
            .map(|_| S::from_f64(normal.sample(rng)))
            .collect(),
    );
    Layer::Conv2d(Conv2d {
        in_channels: in_ch,
        out_channels: out_ch,
        kernel,
        padding: 2,
        weight,
        bias: Tensor::zeros(&[out_ch]),
    })
}

/// Batch norm with gamma=1, beta=0, eps 1e-5, momentum 0.1.
pub fn batch_norm<S: Scalar>(channels: usize) -> Layer<S> {
    Layer::BatchNorm2d(BatchNorm2d {
        channels,
        gamma: Tensor::from_vec(&[channels], vec![S::ONE; channels]),
        beta: Tensor::zeros(&[channels]),
        running_mean: Tensor::zeros(&[channels]),
        running_var: Tensor::from_vec(&[channels], vec![S::ONE; channels]),
        eps: 1e-5,
        momentum: 0.1,
    })
}

/// Fully connected layer with Kaiming fan-in init, zero bias.
pub fn linear<S: Scalar, R: Rng>(in_features: usize, out_features: usize, rng: &mut R) -> Layer<S> {
    let std = (2.0 / in_features as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let weight = Tensor::from_vec(
        &[out_features, in_features],
        (0..out_features * in_features)
            .map(|_| S::from_f64(normal.sample(rng)))
            .collect(),
    );
    Layer::Linear(Linear {
        in_features,
        out_features,
        weight,
        bias: Tensor::zeros(&[out_features]),
    })
}
