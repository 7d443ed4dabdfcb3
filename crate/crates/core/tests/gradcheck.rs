//! Central finite-difference validation of every layer's analytic gradients.

mod support;

use beamsight::nn::{batch_norm, conv5x5, linear, Layer, Stack, Tensor};
use beamsight::seeds::{self, Stream};
use rand::Rng;
use support::{kink_safe_values, max_fd_rel_error, pool_safe_input, random_target, GRAD_TOL};

fn uniform_input(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = seeds::rng(seed, Stream::SampleParams);
    Tensor::from_vec(
        shape,
        (0..shape.iter().product())
            .map(|_| rng.gen_range(lo..hi))
            .collect(),
    )
}

fn check(stack: &mut Stack<f64>, input: &Tensor<f64>, seed: u64, what: &str) {
    let target = random_target(stack, input, seed);
    let err = max_fd_rel_error(stack, input, &target);
    assert!(err <= GRAD_TOL, "{what} seed {seed}: max rel error {err:.3e}");
}

#[test]
fn conv2d_gradients() {
    for seed in 0..10u64 {
        let mut rng = seeds::rng(seed, Stream::WeightInit);
        let mut stack: Stack<f64> = Stack::new(vec![conv5x5(2, 3, &mut rng)]);
        let input = uniform_input(&[2, 2, 6, 6], seed, -1.0, 1.0);
        check(&mut stack, &input, seed, "conv2d");
    }
}

#[test]
fn batch_norm_gradients() {
    for seed in 0..10u64 {
        let mut rng = seeds::rng(seed.wrapping_add(100), Stream::WeightInit);
        let mut bn: Layer<f64> = batch_norm(3);
        // Generic gamma/beta so the check is not at the identity point.
        if let Layer::BatchNorm2d(b) = &mut bn {
            for v in b.gamma.data_mut() {
                *v = rng.gen_range(0.5..1.5);
            }
            for v in b.beta.data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        let mut stack = Stack::new(vec![bn]);
        let input = uniform_input(&[4, 3, 4, 4], seed, -2.0, 2.0);
        check(&mut stack, &input, seed, "batch_norm2d");
    }
}

#[test]
fn relu_gradients() {
    for seed in 0..10u64 {
        let mut stack: Stack<f64> = Stack::new(vec![Layer::ReLU]);
        let input = Tensor::from_vec(&[3, 10], kink_safe_values(30, seed));
        check(&mut stack, &input, seed, "relu");
    }
}

#[test]
fn max_pool_gradients() {
    for seed in 0..10u64 {
        let mut stack: Stack<f64> = Stack::new(vec![Layer::MaxPool2x2]);
        let input = pool_safe_input(2, 2, 6, 6, seed);
        check(&mut stack, &input, seed, "max_pool2x2");
    }
}

#[test]
fn flatten_gradients() {
    for seed in 0..10u64 {
        let mut stack: Stack<f64> = Stack::new(vec![Layer::Flatten]);
        let input = uniform_input(&[2, 3, 4, 4], seed, -1.0, 1.0);
        check(&mut stack, &input, seed, "flatten");
    }
}

#[test]
fn linear_gradients() {
    for seed in 0..10u64 {
        let mut rng = seeds::rng(seed.wrapping_add(200), Stream::WeightInit);
        let mut stack: Stack<f64> = Stack::new(vec![linear(7, 4, &mut rng)]);
        let input = uniform_input(&[3, 7], seed, -1.0, 1.0);
        check(&mut stack, &input, seed, "linear");
    }
}

#[test]
fn composite_stack_gradients() {
    // The ConvNet block pattern end to end: conv -> bn -> relu -> pool ->
    // flatten -> linear, on small tensors.
    for seed in 0..10u64 {
        let mut rng = seeds::rng(seed.wrapping_add(300), Stream::WeightInit);
        let mut stack: Stack<f64> = Stack::new(vec![
            conv5x5(2, 3, &mut rng),
            batch_norm(3),
            Layer::ReLU,
            Layer::MaxPool2x2,
            Layer::Flatten,
            linear(3 * 4 * 4, 4, &mut rng),
        ]);
        let input = uniform_input(&[2, 2, 8, 8], seed, -1.0, 1.0);
        check(&mut stack, &input, seed, "composite");
    }
}
