//! Shared helpers for integration tests: the central finite-difference
//! gradient oracle and kink-safe random input generators.
//!
//! ReLU and max-pool are piecewise linear; a finite-difference probe that
//! crosses a kink or flips an argmax does not estimate the analytic
//! (sub)gradient. Inputs are therefore generated with margins: ReLU inputs
//! keep |x| well above the probe step, and pooling windows keep pairwise
//! gaps above it.

#![allow(dead_code)]

use beamsight::nn::{mse_loss, Stack, Tensor};
use beamsight::seeds::{self, Stream};
use rand::seq::SliceRandom;
use rand::Rng;

pub const FD_EPS: f64 = 1e-4;
pub const GRAD_TOL: f64 = 1e-5;

/// Differences below this are zero-vs-zero agreement: central differences of
/// an f64 loss carry ~ulp(loss)/eps ~ 1e-11 of rounding noise, and gradients
/// that are structurally zero (e.g. conv bias feeding batch norm) sit there.
pub const GRAD_ABS_FLOOR: f64 = 1e-8;

/// Uniform values in ±[0.05, 1]: bounded away from the ReLU kink.
pub fn kink_safe_values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeds::rng(seed, Stream::SampleParams);
    (0..n)
        .map(|_| {
            let mag = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Values whose 2x2 pooling windows have pairwise gaps >= 0.1.
pub fn pool_safe_input(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
    let mut rng = seeds::rng(seed, Stream::SampleParams);
    let mut data = vec![0.0f64; n * c * h * w];
    for plane in 0..n * c {
        for wy in 0..h / 2 {
            for wx in 0..w / 2 {
                let base: f64 = rng.gen_range(-1.0..1.0);
                let mut offsets = [0.0, 0.1, 0.2, 0.3];
                offsets.shuffle(&mut rng);
                for (j, &off) in offsets.iter().enumerate() {
                    let (dy, dx) = (j / 2, j % 2);
                    data[plane * h * w + (2 * wy + dy) * w + 2 * wx + dx] = base + off;
                }
            }
        }
    }
    Tensor::from_vec(&[n, c, h, w], data)
}

/// Maximum relative error between analytic and central finite-difference
/// gradients of `mse(stack(x), target)` over every trainable parameter and
/// every input element. Runs in f64.
pub fn max_fd_rel_error(stack: &mut Stack<f64>, input: &Tensor<f64>, target: &Tensor<f64>) -> f64 {
    let (out, cache) = stack.forward_train(input.clone()).expect("forward");
    let (_, loss_grad) = mse_loss(&out, target).expect("loss");
    let (analytic, analytic_input) = stack.backward(&cache, loss_grad).expect("backward");

    let loss_at = |stack: &mut Stack<f64>, x: &Tensor<f64>| -> f64 {
        let (out, _) = stack.forward_train(x.clone()).expect("fd forward");
        mse_loss(&out, target).expect("fd loss").0
    };

    let rel = |a: f64, fd: f64| {
        let diff = (a - fd).abs();
        if diff <= GRAD_ABS_FLOOR {
            0.0
        } else {
            diff / a.abs().max(fd.abs())
        }
    };
    let mut worst = 0.0f64;

    let n_params = stack.parameters().len();
    for p_idx in 0..n_params {
        let numel = stack.parameters()[p_idx].numel();
        for i in 0..numel {
            let old = stack.parameters()[p_idx].data()[i];
            stack.parameters_mut()[p_idx].data_mut()[i] = old + FD_EPS;
            let plus = loss_at(stack, input);
            stack.parameters_mut()[p_idx].data_mut()[i] = old - FD_EPS;
            let minus = loss_at(stack, input);
            stack.parameters_mut()[p_idx].data_mut()[i] = old;
            let fd = (plus - minus) / (2.0 * FD_EPS);
            worst = worst.max(rel(analytic[p_idx].data()[i], fd));
        }
    }

    let mut x = input.clone();
    for i in 0..x.numel() {
        let old = x.data()[i];
        x.data_mut()[i] = old + FD_EPS;
        let plus = loss_at(stack, &x);
        x.data_mut()[i] = old - FD_EPS;
        let minus = loss_at(stack, &x);
        x.data_mut()[i] = old;
        let fd = (plus - minus) / (2.0 * FD_EPS);
        worst = worst.max(rel(analytic_input.data()[i], fd));
    }
    worst
}

/// Random target matching the stack output for `input`.
pub fn random_target(stack: &mut Stack<f64>, input: &Tensor<f64>, seed: u64) -> Tensor<f64> {
    let (out, _) = stack.forward_train(input.clone()).expect("probe forward");
    let mut rng = seeds::rng(seed, Stream::SearchSampling);
    Tensor::from_vec(
        out.shape(),
        (0..out.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}
