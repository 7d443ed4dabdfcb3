//! The fixed layer vocabulary: 5x5/stride-1/pad-2 convolution, batch norm,
//! ReLU, 2x2/stride-2 max pooling, flatten, and fully connected layers, each
//! with analytic gradients.
//!
//! Batches are [N, C, H, W] (or [N, F] after flatten). Convolutions run as
//! im2col + GEMM per sample; samples parallelize over a fixed chunk grid and
//! every cross-sample reduction happens in sample order, so results do not
//! depend on the number of worker threads.

use rayon::prelude::*;

use super::tensor::{Scalar, Tensor};
use super::NnError;

/// Samples per parallel task. Fixed so the reduction tree never depends on
/// the thread count.
const SAMPLE_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub struct Conv2d<S> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    /// [out_channels, in_channels * kernel * kernel]
    pub weight: Tensor<S>,
    /// [out_channels]
    pub bias: Tensor<S>,
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d<S> {
    pub channels: usize,
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct Linear<S> {
    pub in_features: usize,
    pub out_features: usize,
    /// [out_features, in_features]
    pub weight: Tensor<S>,
    /// [out_features]
    pub bias: Tensor<S>,
}

#[derive(Debug, Clone)]
pub enum Layer<S> {
    Conv2d(Conv2d<S>),
    BatchNorm2d(BatchNorm2d<S>),
    ReLU,
    MaxPool2x2,
    Flatten,
    Linear(Linear<S>),
}

/// Per-layer state captured by a training forward pass.
#[derive(Debug)]
pub enum LayerCache<S> {
    Conv { input: Tensor<S> },
    Bn { input: Tensor<S>, mean: Vec<f64>, invstd: Vec<f64> },
    Relu { mask: Vec<bool> },
    Pool { in_shape: [usize; 4], argmax: Vec<u8> },
    Flatten { in_shape: Vec<usize> },
    Linear { input: Tensor<S> },
}

impl<S: Scalar> Layer<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::BatchNorm2d(_) => "batch_norm2d",
            Layer::ReLU => "relu",
            Layer::MaxPool2x2 => "max_pool2x2",
            Layer::Flatten => "flatten",
            Layer::Linear(_) => "linear",
        }
    }

    /// Trainable parameters, in checkpoint order.
    pub fn parameters(&self) -> Vec<&Tensor<S>> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::BatchNorm2d(b) => vec![&b.gamma, &b.beta],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => vec![],
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<S>> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::BatchNorm2d(b) => vec![&mut b.gamma, &mut b.beta],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => vec![],
        }
    }

    /// Non-trainable state persisted in checkpoints (batch-norm statistics).
    pub fn buffers(&self) -> Vec<&Tensor<S>> {
        match self {
            Layer::BatchNorm2d(b) => vec![&b.running_mean, &b.running_var],
            _ => vec![],
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor<S>> {
        match self {
            Layer::BatchNorm2d(b) => vec![&mut b.running_mean, &mut b.running_var],
            _ => vec![],
        }
    }

    /// Trainable parameters followed by buffers, the checkpoint layout order.
    pub fn state_tensors(&self) -> Vec<&Tensor<S>> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::BatchNorm2d(b) => {
                vec![&b.gamma, &b.beta, &b.running_mean, &b.running_var]
            }
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => vec![],
        }
    }

    pub fn state_tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::BatchNorm2d(b) => vec![
                &mut b.gamma,
                &mut b.beta,
                &mut b.running_mean,
                &mut b.running_var,
            ],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => vec![],
        }
    }
}

fn shape4(shape: &[usize], layer: usize, what: &str) -> Result<[usize; 4], NnError> {
    match shape {
        &[n, c, h, w] => Ok([n, c, h, w]),
        other => Err(NnError::Shape {
            layer,
            message: format!("{what} expects [N,C,H,W], got {other:?}"),
        }),
    }
}

// ---------------------------------------------------------------------------
// im2col / col2im for 5x5-style square kernels, stride 1, symmetric padding.

fn im2col<S: Scalar>(input: &[S], c_in: usize, h: usize, w: usize, k: usize, pad: usize, col: &mut [S]) {
    let plane = h * w;
    debug_assert_eq!(col.len(), c_in * k * k * plane);
    for c in 0..c_in {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * plane;
                let shift = kx as isize - pad as isize;
                for oy in 0..h {
                    let iy = oy as isize + ky as isize - pad as isize;
                    let dst = &mut col[row + oy * w..row + (oy + 1) * w];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(S::ZERO);
                        continue;
                    }
                    let src = &input[c * plane + iy as usize * w..c * plane + (iy as usize + 1) * w];
                    if shift >= 0 {
                        let s = shift as usize;
                        dst[..w - s].copy_from_slice(&src[s..]);
                        dst[w - s..].fill(S::ZERO);
                    } else {
                        let s = (-shift) as usize;
                        dst[..s].fill(S::ZERO);
                        dst[s..].copy_from_slice(&src[..w - s]);
                    }
                }
            }
        }
    }
}

fn col2im_add<S: Scalar>(col: &[S], c_in: usize, h: usize, w: usize, k: usize, pad: usize, out: &mut [S]) {
    let plane = h * w;
    for c in 0..c_in {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * plane;
                let shift = kx as isize - pad as isize;
                for oy in 0..h {
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &col[row + oy * w..row + (oy + 1) * w];
                    let dst_base = c * plane + iy as usize * w;
                    if shift >= 0 {
                        let s = shift as usize;
                        let dst = &mut out[dst_base + s..dst_base + w];
                        for (d, v) in dst.iter_mut().zip(&src[..w - s]) {
                            *d += *v;
                        }
                    } else {
                        let s = (-shift) as usize;
                        let dst = &mut out[dst_base..dst_base + w - s];
                        for (d, v) in dst.iter_mut().zip(&src[s..]) {
                            *d += *v;
                        }
                    }
                }
            }
        }
    }
}

impl<S: Scalar> Conv2d<S> {
    fn forward(&self, input: &Tensor<S>, layer: usize) -> Result<Tensor<S>, NnError> {
        let [n, c, h, w] = shape4(input.shape(), layer, "conv2d")?;
        if c != self.in_channels {
            return Err(NnError::Shape {
                layer,
                message: format!("conv2d expects {} input channels, got {c}", self.in_channels),
            });
        }
        let k = self.kernel;
        let ckk = c * k * k;
        let plane = h * w;
        let out_plane = self.out_channels * plane;
        let mut out = Tensor::zeros(&[n, self.out_channels, h, w]);
        let in_data = input.data();
        let weight = self.weight.data();
        let bias = self.bias.data();
        let out_chunks: Vec<(usize, &mut [S])> = out
            .data_mut()
            .chunks_mut(SAMPLE_CHUNK * out_plane)
            .enumerate()
            .collect();
        out_chunks.into_par_iter().for_each(|(chunk_idx, out_chunk)| {
            let mut col = vec![S::ZERO; ckk * plane];
            for (i, out_s) in out_chunk.chunks_mut(out_plane).enumerate() {
                let s = chunk_idx * SAMPLE_CHUNK + i;
                let in_s = &in_data[s * c * plane..(s + 1) * c * plane];
                im2col(in_s, c, h, w, k, self.padding, &mut col);
                unsafe {
                    S::gemm(
                        self.out_channels,
                        ckk,
                        plane,
                        S::ONE,
                        weight.as_ptr(),
                        ckk as isize,
                        1,
                        col.as_ptr(),
                        plane as isize,
                        1,
                        S::ZERO,
                        out_s.as_mut_ptr(),
                        plane as isize,
                        1,
                    );
                }
                for (o, row) in out_s.chunks_mut(plane).enumerate() {
                    let b = bias[o];
                    for v in row.iter_mut() {
                        *v += b;
                    }
                }
            }
        });
        Ok(out)
    }

    fn backward(
        &self,
        input: &Tensor<S>,
        grad_out: &Tensor<S>,
    ) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
        let [n, c, h, w] = [
            input.shape()[0],
            input.shape()[1],
            input.shape()[2],
            input.shape()[3],
        ];
        let k = self.kernel;
        let ckk = c * k * k;
        let plane = h * w;
        let out_plane = self.out_channels * plane;
        let in_data = input.data();
        let go = grad_out.data();
        let weight = self.weight.data();

        let mut grad_in = Tensor::zeros(&[n, c, h, w]);
        // Per-chunk weight/bias partials, later reduced in chunk order.
        struct Partial<S> {
            dw: Vec<S>,
            db: Vec<S>,
        }
        let gi_chunks: Vec<(usize, &mut [S])> = grad_in
            .data_mut()
            .chunks_mut(SAMPLE_CHUNK * c * plane)
            .enumerate()
            .collect();
        let partials: Vec<Partial<S>> = gi_chunks
            .into_par_iter()
            .map(|(chunk_idx, gi_chunk)| {
                let mut col = vec![S::ZERO; ckk * plane];
                let mut dcol = vec![S::ZERO; ckk * plane];
                let mut dw = vec![S::ZERO; self.out_channels * ckk];
                let mut db = vec![S::ZERO; self.out_channels];
                for (i, gi_s) in gi_chunk.chunks_mut(c * plane).enumerate() {
                    let s = chunk_idx * SAMPLE_CHUNK + i;
                    let in_s = &in_data[s * c * plane..(s + 1) * c * plane];
                    let go_s = &go[s * out_plane..(s + 1) * out_plane];
                    im2col(in_s, c, h, w, k, self.padding, &mut col);
                    unsafe {
                        // dW += dOut(out x plane) * col^T(plane x ckk)
                        S::gemm(
                            self.out_channels,
                            plane,
                            ckk,
                            S::ONE,
                            go_s.as_ptr(),
                            plane as isize,
                            1,
                            col.as_ptr(),
                            1,
                            plane as isize,
                            S::ONE,
                            dw.as_mut_ptr(),
                            ckk as isize,
                            1,
                        );
                        // dcol = W^T(ckk x out) * dOut(out x plane)
                        S::gemm(
                            ckk,
                            self.out_channels,
                            plane,
                            S::ONE,
                            weight.as_ptr(),
                            1,
                            ckk as isize,
                            go_s.as_ptr(),
                            plane as isize,
                            1,
                            S::ZERO,
                            dcol.as_mut_ptr(),
                            plane as isize,
                            1,
                        );
                    }
                    col2im_add(&dcol, c, h, w, k, self.padding, gi_s);
                    for (o, row) in go_s.chunks(plane).enumerate() {
                        let mut acc = S::ZERO;
                        for v in row {
                            acc += *v;
                        }
                        db[o] += acc;
                    }
                }
                Partial { dw, db }
            })
            .collect();

        let mut dw = Tensor::zeros(&[self.out_channels, ckk]);
        let mut db = Tensor::zeros(&[self.out_channels]);
        for p in partials {
            for (d, v) in dw.data_mut().iter_mut().zip(&p.dw) {
                *d += *v;
            }
            for (d, v) in db.data_mut().iter_mut().zip(&p.db) {
                *d += *v;
            }
        }
        (dw, db, grad_in)
    }
}

impl<S: Scalar> BatchNorm2d<S> {
    fn forward(
        &mut self,
        input: Tensor<S>,
        mode: Mode,
        layer: usize,
    ) -> Result<(Tensor<S>, Option<(Tensor<S>, Vec<f64>, Vec<f64>)>), NnError> {
        let [n, c, h, w] = shape4(input.shape(), layer, "batch_norm2d")?;
        if c != self.channels {
            return Err(NnError::Shape {
                layer,
                message: format!("batch_norm2d expects {} channels, got {c}", self.channels),
            });
        }
        let plane = h * w;
        let m = n * plane;
        let x = input.data();

        let (mean, invstd): (Vec<f64>, Vec<f64>) = match mode {
            Mode::Train => {
                if m < 2 {
                    return Err(NnError::Shape {
                        layer,
                        message: "batch_norm2d needs at least 2 values per channel in train mode".into(),
                    });
                }
                let stats: Vec<(f64, f64)> = (0..c)
                    .into_par_iter()
                    .map(|ch| {
                        let mut sum = 0.0f64;
                        let mut sumsq = 0.0f64;
                        for s in 0..n {
                            let base = (s * c + ch) * plane;
                            for v in &x[base..base + plane] {
                                let v = v.to_f64();
                                sum += v;
                                sumsq += v * v;
                            }
                        }
                        let mean = sum / m as f64;
                        let var = (sumsq / m as f64 - mean * mean).max(0.0);
                        (mean, var)
                    })
                    .collect();
                let mom = self.momentum;
                for (ch, &(mean, var)) in stats.iter().enumerate() {
                    let unbiased = var * m as f64 / (m as f64 - 1.0);
                    let rm = self.running_mean.data()[ch].to_f64();
                    let rv = self.running_var.data()[ch].to_f64();
                    self.running_mean.data_mut()[ch] = S::from_f64((1.0 - mom) * rm + mom * mean);
                    self.running_var.data_mut()[ch] = S::from_f64((1.0 - mom) * rv + mom * unbiased);
                }
                (
                    stats.iter().map(|s| s.0).collect(),
                    stats.iter().map(|s| 1.0 / (s.1 + self.eps).sqrt()).collect(),
                )
            }
            Mode::Eval => (
                self.running_mean.data().iter().map(|v| v.to_f64()).collect(),
                self.running_var
                    .data()
                    .iter()
                    .map(|v| 1.0 / (v.to_f64() + self.eps).sqrt())
                    .collect(),
            ),
        };

        let gamma = self.gamma.data();
        let beta = self.beta.data();
        let mut out = Tensor::zeros(&[n, c, h, w]);
        out.data_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(idx, row)| {
                let ch = idx % c;
                let scale = S::from_f64(gamma[ch].to_f64() * invstd[ch]);
                let shift = S::from_f64(beta[ch].to_f64() - gamma[ch].to_f64() * invstd[ch] * mean[ch]);
                let src = &x[idx * plane..(idx + 1) * plane];
                for (o, v) in row.iter_mut().zip(src) {
                    *o = *v * scale + shift;
                }
            });

        match mode {
            Mode::Train => Ok((out, Some((input, mean, invstd)))),
            Mode::Eval => Ok((out, None)),
        }
    }

    /// Train-mode backward using the batch-statistics formula.
    fn backward(
        &self,
        input: &Tensor<S>,
        mean: &[f64],
        invstd: &[f64],
        grad_out: &Tensor<S>,
    ) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
        let [n, c, h, w] = [
            input.shape()[0],
            input.shape()[1],
            input.shape()[2],
            input.shape()[3],
        ];
        let plane = h * w;
        let m = (n * plane) as f64;
        let x = input.data();
        let go = grad_out.data();
        let gamma = self.gamma.data();

        // Per-channel reductions in fixed sample order.
        let sums: Vec<(f64, f64)> = (0..c)
            .into_par_iter()
            .map(|ch| {
                let mut sum_dy = 0.0f64;
                let mut sum_dy_xhat = 0.0f64;
                for s in 0..n {
                    let base = (s * c + ch) * plane;
                    for i in 0..plane {
                        let dy = go[base + i].to_f64();
                        let xhat = (x[base + i].to_f64() - mean[ch]) * invstd[ch];
                        sum_dy += dy;
                        sum_dy_xhat += dy * xhat;
                    }
                }
                (sum_dy, sum_dy_xhat)
            })
            .collect();

        let mut dgamma = Tensor::zeros(&[c]);
        let mut dbeta = Tensor::zeros(&[c]);
        for ch in 0..c {
            dgamma.data_mut()[ch] = S::from_f64(sums[ch].1);
            dbeta.data_mut()[ch] = S::from_f64(sums[ch].0);
        }

        let mut grad_in = Tensor::zeros(&[n, c, h, w]);
        grad_in
            .data_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(idx, row)| {
                let ch = idx % c;
                let g = gamma[ch].to_f64();
                let (sum_dy, sum_dy_xhat) = sums[ch];
                let base = idx * plane;
                for (i, o) in row.iter_mut().enumerate() {
                    let dy = go[base + i].to_f64();
                    let xhat = (x[base + i].to_f64() - mean[ch]) * invstd[ch];
                    let dx = g * invstd[ch] * (dy - sum_dy / m - xhat * sum_dy_xhat / m);
                    *o = S::from_f64(dx);
                }
            });
        (dgamma, dbeta, grad_in)
    }
}

impl<S: Scalar> Linear<S> {
    fn forward(&self, input: &Tensor<S>, layer: usize) -> Result<Tensor<S>, NnError> {
        let (n, f) = match input.shape() {
            &[n, f] => (n, f),
            other => {
                return Err(NnError::Shape {
                    layer,
                    message: format!("linear expects [N,F], got {other:?}"),
                })
            }
        };
        if f != self.in_features {
            return Err(NnError::Shape {
                layer,
                message: format!("linear expects {} features, got {f}", self.in_features),
            });
        }
        let mut out = Tensor::zeros(&[n, self.out_features]);
        unsafe {
            // Y(n x out) = X(n x in) * W^T(in x out)
            S::gemm(
                n,
                f,
                self.out_features,
                S::ONE,
                input.data().as_ptr(),
                f as isize,
                1,
                self.weight.data().as_ptr(),
                1,
                f as isize,
                S::ZERO,
                out.data_mut().as_mut_ptr(),
                self.out_features as isize,
                1,
            );
        }
        let bias = self.bias.data();
        for row in out.data_mut().chunks_mut(self.out_features) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += *b;
            }
        }
        Ok(out)
    }

    fn backward(
        &self,
        input: &Tensor<S>,
        grad_out: &Tensor<S>,
    ) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
        let n = input.shape()[0];
        let fin = self.in_features;
        let fout = self.out_features;
        let mut dw = Tensor::zeros(&[fout, fin]);
        let mut db = Tensor::zeros(&[fout]);
        let mut grad_in = Tensor::zeros(&[n, fin]);
        unsafe {
            // dW(out x in) = dY^T(out x n) * X(n x in)
            S::gemm(
                fout,
                n,
                fin,
                S::ONE,
                grad_out.data().as_ptr(),
                1,
                fout as isize,
                input.data().as_ptr(),
                fin as isize,
                1,
                S::ZERO,
                dw.data_mut().as_mut_ptr(),
                fin as isize,
                1,
            );
            // dX(n x in) = dY(n x out) * W(out x in)
            S::gemm(
                n,
                fout,
                fin,
                S::ONE,
                grad_out.data().as_ptr(),
                fout as isize,
                1,
                self.weight.data().as_ptr(),
                fin as isize,
                1,
                S::ZERO,
                grad_in.data_mut().as_mut_ptr(),
                fin as isize,
                1,
            );
        }
        for row in grad_out.data().chunks(fout) {
            for (d, v) in db.data_mut().iter_mut().zip(row) {
                *d += *v;
            }
        }
        (dw, db, grad_in)
    }
}

/// Elementwise task size for parallel maps. Fixed: grouping never affects
/// elementwise results, but a stable constant keeps profiles comparable.
const ELEM_CHUNK: usize = 1 << 16;

fn relu_forward<S: Scalar>(mut input: Tensor<S>) -> (Tensor<S>, Vec<bool>) {
    let mut mask = vec![false; input.numel()];
    mask.par_chunks_mut(ELEM_CHUNK)
        .zip(input.data_mut().par_chunks_mut(ELEM_CHUNK))
        .for_each(|(mask_chunk, data_chunk)| {
            for (m, v) in mask_chunk.iter_mut().zip(data_chunk.iter_mut()) {
                *m = *v > S::ZERO;
                *v = v.maximum(S::ZERO);
            }
        });
    (input, mask)
}

fn maxpool_forward<S: Scalar>(
    input: &Tensor<S>,
    layer: usize,
) -> Result<(Tensor<S>, [usize; 4], Vec<u8>), NnError> {
    let [n, c, h, w] = shape4(input.shape(), layer, "max_pool2x2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NnError::Shape {
            layer,
            message: format!("max_pool2x2 needs even spatial dims, got {h}x{w}"),
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0u8; n * c * oh * ow];
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .zip(argmax.par_chunks_mut(oh * ow))
        .enumerate()
        .for_each(|(idx, (out_plane, arg_plane))| {
            let in_base = idx * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let i00 = in_base + (2 * oy) * w + 2 * ox;
                    let candidates = [x[i00], x[i00 + 1], x[i00 + w], x[i00 + w + 1]];
                    let mut best = 0usize;
                    for j in 1..4 {
                        if candidates[j] > candidates[best] {
                            best = j;
                        }
                    }
                    out_plane[oy * ow + ox] = candidates[best];
                    arg_plane[oy * ow + ox] = best as u8;
                }
            }
        });
    Ok((out, [n, c, h, w], argmax))
}

fn maxpool_backward<S: Scalar>(in_shape: [usize; 4], argmax: &[u8], grad_out: &Tensor<S>) -> Tensor<S> {
    let [n, c, h, w] = in_shape;
    let (oh, ow) = (h / 2, w / 2);
    let go = grad_out.data();
    let mut grad_in = Tensor::zeros(&[n, c, h, w]);
    grad_in
        .data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(idx, gi_plane)| {
            let out_base = idx * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let o = out_base + oy * ow + ox;
                    let which = argmax[o] as usize;
                    let (dy, dx) = (which / 2, which % 2);
                    gi_plane[(2 * oy + dy) * w + 2 * ox + dx] += go[o];
                }
            }
        });
    grad_in
}

/// An ordered stack of layers with explicit forward caches.
#[derive(Debug, Clone)]
pub struct Stack<S> {
    pub layers: Vec<Layer<S>>,
}

impl<S: Scalar> Stack<S> {
    pub fn new(layers: Vec<Layer<S>>) -> Self {
        Stack { layers }
    }

    /// Flat list of trainable parameters as (name, tensor) pairs.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let labels: &[&str] = match layer {
                Layer::Conv2d(_) | Layer::Linear(_) => &["weight", "bias"],
                Layer::BatchNorm2d(_) => &["gamma", "beta"],
                _ => &[],
            };
            for l in labels {
                names.push(format!("layer{}.{}.{}", i, layer.name(), l));
            }
        }
        names
    }

    pub fn parameters(&self) -> Vec<&Tensor<S>> {
        self.layers.iter().flat_map(|l| l.parameters()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.layers.iter_mut().flat_map(|l| l.parameters_mut()).collect()
    }

    /// Training forward: batch-norm uses batch statistics and updates running
    /// stats; returns the activations cache consumed by [`Stack::backward`].
    pub fn forward_train(
        &mut self,
        input: Tensor<S>,
    ) -> Result<(Tensor<S>, Vec<LayerCache<S>>), NnError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input;
        for i in 0..self.layers.len() {
            let (out, cache) = match &mut self.layers[i] {
                Layer::Conv2d(conv) => {
                    let out = conv.forward(&x, i)?;
                    (out, LayerCache::Conv { input: x })
                }
                Layer::BatchNorm2d(bn) => {
                    let (out, cache) = bn.forward(x, Mode::Train, i)?;
                    let (input, mean, invstd) = cache.expect("train mode caches stats");
                    (out, LayerCache::Bn { input, mean, invstd })
                }
                Layer::ReLU => {
                    let (out, mask) = relu_forward(x);
                    (out, LayerCache::Relu { mask })
                }
                Layer::MaxPool2x2 => {
                    let (out, in_shape, argmax) = maxpool_forward(&x, i)?;
                    (out, LayerCache::Pool { in_shape, argmax })
                }
                Layer::Flatten => {
                    let in_shape = x.shape().to_vec();
                    let n = in_shape[0];
                    let f: usize = in_shape[1..].iter().product();
                    (x.reshaped(&[n, f]), LayerCache::Flatten { in_shape })
                }
                Layer::Linear(lin) => {
                    let out = lin.forward(&x, i)?;
                    (out, LayerCache::Linear { input: x })
                }
            };
            if !out.all_finite() {
                return Err(NnError::NonFinite {
                    context: format!("forward output of layer {i} ({})", self.layers[i].name()),
                });
            }
            caches.push(cache);
            x = out;
        }
        Ok((x, caches))
    }

    /// Eval forward: batch-norm uses running statistics; nothing mutates.
    pub fn forward_eval(&self, input: Tensor<S>) -> Result<Tensor<S>, NnError> {
        let mut x = input;
        for (i, layer) in self.layers.iter().enumerate() {
            x = match layer {
                Layer::Conv2d(conv) => conv.forward(&x, i)?,
                Layer::BatchNorm2d(bn) => {
                    let [n, c, h, w] = shape4(x.shape(), i, "batch_norm2d")?;
                    if c != bn.channels {
                        return Err(NnError::Shape {
                            layer: i,
                            message: format!("batch_norm2d expects {} channels, got {c}", bn.channels),
                        });
                    }
                    let plane = h * w;
                    let gamma = bn.gamma.data();
                    let beta = bn.beta.data();
                    let rm = bn.running_mean.data();
                    let rv = bn.running_var.data();
                    let xd = x.data();
                    let mut out = Tensor::zeros(&[n, c, h, w]);
                    out.data_mut()
                        .par_chunks_mut(plane)
                        .enumerate()
                        .for_each(|(idx, row)| {
                            let ch = idx % c;
                            let invstd = 1.0 / (rv[ch].to_f64() + bn.eps).sqrt();
                            let scale = S::from_f64(gamma[ch].to_f64() * invstd);
                            let shift = S::from_f64(
                                beta[ch].to_f64() - gamma[ch].to_f64() * invstd * rm[ch].to_f64(),
                            );
                            let src = &xd[idx * plane..(idx + 1) * plane];
                            for (o, v) in row.iter_mut().zip(src) {
                                *o = *v * scale + shift;
                            }
                        });
                    out
                }
                Layer::ReLU => relu_forward(x).0,
                Layer::MaxPool2x2 => maxpool_forward(&x, i)?.0,
                Layer::Flatten => {
                    let n = x.shape()[0];
                    let f: usize = x.shape()[1..].iter().product();
                    x.reshaped(&[n, f])
                }
                Layer::Linear(lin) => lin.forward(&x, i)?,
            };
            if !x.all_finite() {
                return Err(NnError::NonFinite {
                    context: format!("eval output of layer {i} ({})", layer.name()),
                });
            }
        }
        Ok(x)
    }

    /// Backpropagates `grad_out` through the cached forward pass, returning
    /// per-parameter gradients (in [`Stack::parameters`] order) and the
    /// gradient with respect to the stack input.
    pub fn backward(
        &self,
        caches: &[LayerCache<S>],
        grad_out: Tensor<S>,
    ) -> Result<(Vec<Tensor<S>>, Tensor<S>), NnError> {
        if caches.len() != self.layers.len() {
            return Err(NnError::MissingCache);
        }
        let mut grads_rev: Vec<Vec<Tensor<S>>> = Vec::with_capacity(self.layers.len());
        let mut dy = grad_out;
        for (i, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            let (param_grads, dx) = match (layer, cache) {
                (Layer::Conv2d(conv), LayerCache::Conv { input }) => {
                    let (dw, db, dx) = conv.backward(input, &dy);
                    (vec![dw, db], dx)
                }
                (Layer::BatchNorm2d(bn), LayerCache::Bn { input, mean, invstd }) => {
                    let (dg, db, dx) = bn.backward(input, mean, invstd, &dy);
                    (vec![dg, db], dx)
                }
                (Layer::ReLU, LayerCache::Relu { mask }) => {
                    let mut dx = dy;
                    for (v, &keep) in dx.data_mut().iter_mut().zip(mask) {
                        if !keep {
                            *v = S::ZERO;
                        }
                    }
                    (vec![], dx)
                }
                (Layer::MaxPool2x2, LayerCache::Pool { in_shape, argmax }) => {
                    (vec![], maxpool_backward(*in_shape, argmax, &dy))
                }
                (Layer::Flatten, LayerCache::Flatten { in_shape }) => {
                    (vec![], dy.reshaped(in_shape))
                }
                (Layer::Linear(lin), LayerCache::Linear { input }) => {
                    let (dw, db, dx) = lin.backward(input, &dy);
                    (vec![dw, db], dx)
                }
                _ => return Err(NnError::MissingCache),
            };
            for g in &param_grads {
                if !g.all_finite() {
                    return Err(NnError::NonFinite {
                        context: format!("gradient at layer {i} ({})", layer.name()),
                    });
                }
            }
            grads_rev.push(param_grads);
            dy = dx;
        }
        let mut grads = Vec::new();
        for layer_grads in grads_rev.into_iter().rev() {
            grads.extend(layer_grads);
        }
        Ok((grads, dy))
    }
}
