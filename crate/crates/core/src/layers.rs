//! Layer operations: same-padded 1D convolution, position-shared linear,
//! ReLU, inverted dropout, row softmax. Each op has an exact analytic
//! backward pass.
//!
//! Convolution contract, per output position `i` and filter `r`:
//!
//! ```text
//! pre[i, r] = sum_{j=-c..c} w[r, j, :] . x[i+j, :] + b[r]
//! ```
//!
//! with stride 1, odd kernel `k = 2c + 1`, and positions outside `0..n` read
//! as all-zero vectors, so the output always has exactly `n` positions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::SeqTensor;

/// One convolution layer: weights `[out_channels, k, in_channels]` (flat,
/// row-major), bias `[out_channels]`, and shape-matched gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams<S> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
    pub grad_weights: Vec<S>,
    pub grad_bias: Vec<S>,
    out_channels: usize,
    kernel: usize,
    in_channels: usize,
}

impl<S: Scalar> ConvLayerParams<S> {
    pub fn zeros(out_channels: usize, kernel: usize, in_channels: usize) -> Result<Self> {
        if kernel % 2 == 0 || kernel == 0 {
            return Err(Error::parameter(
                "kernel",
                format!("kernel width must be odd, got {kernel}"),
            ));
        }
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::parameter(
                "channels",
                "in/out channel counts must be >= 1",
            ));
        }
        let len = out_channels * kernel * in_channels;
        Ok(ConvLayerParams {
            weights: vec![S::zero(); len],
            bias: vec![S::zero(); out_channels],
            grad_weights: vec![S::zero(); len],
            grad_bias: vec![S::zero(); out_channels],
            out_channels,
            kernel,
            in_channels,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(
        out_channels: usize,
        kernel: usize,
        in_channels: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut p = Self::zeros(out_channels, kernel, in_channels)?;
        let fan_in = (kernel * in_channels) as f64;
        let fan_out = (kernel * out_channels) as f64;
        let limit = (6.0 / (fan_in + fan_out)).sqrt();
        for w in p.weights.iter_mut() {
            *w = rng::uniform(rng, -limit, limit);
        }
        Ok(p)
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    /// Context words on each side: `c = (k - 1) / 2`.
    pub fn half_window(&self) -> usize {
        (self.kernel - 1) / 2
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    fn w_index(&self, r: usize, j: usize, i: usize) -> usize {
        (r * self.kernel + j) * self.in_channels + i
    }

    pub fn zero_grads(&mut self) {
        self.grad_weights.iter_mut().for_each(|g| *g = S::zero());
        self.grad_bias.iter_mut().for_each(|g| *g = S::zero());
    }
}

/// Position-shared affine map: weights `[in_channels, out_channels]`,
/// bias `[out_channels]`, plus gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams<S> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
    pub grad_weights: Vec<S>,
    pub grad_bias: Vec<S>,
    in_channels: usize,
    out_channels: usize,
}

impl<S: Scalar> LinearParams<S> {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::parameter(
                "channels",
                "in/out channel counts must be >= 1",
            ));
        }
        Ok(LinearParams {
            weights: vec![S::zero(); in_channels * out_channels],
            bias: vec![S::zero(); out_channels],
            grad_weights: vec![S::zero(); in_channels * out_channels],
            grad_bias: vec![S::zero(); out_channels],
            in_channels,
            out_channels,
        })
    }

    pub fn glorot(in_channels: usize, out_channels: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut p = Self::zeros(in_channels, out_channels)?;
        let limit = (6.0 / (in_channels + out_channels) as f64).sqrt();
        for w in p.weights.iter_mut() {
            *w = rng::uniform(rng, -limit, limit);
        }
        Ok(p)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn zero_grads(&mut self) {
        self.grad_weights.iter_mut().for_each(|g| *g = S::zero());
        self.grad_bias.iter_mut().for_each(|g| *g = S::zero());
    }
}

/// Same-padded stride-1 convolution, pre-activation only (no ReLU).
pub fn conv1d_same<S: Scalar>(
    input: &SeqTensor<S>,
    params: &ConvLayerParams<S>,
) -> Result<SeqTensor<S>> {
    input.expect_cols(params.in_channels, "conv1d_same input")?;
    let n = input.rows();
    let d_in = params.in_channels;
    let c = params.half_window();
    let mut out = SeqTensor::zeros(n, params.out_channels);
    for pos in 0..n {
        let out_row = out.row_mut(pos);
        for r in 0..params.out_channels {
            let mut acc = params.bias[r];
            for j in 0..params.kernel {
                let src = pos as isize + j as isize - c as isize;
                if src < 0 || src >= n as isize {
                    continue; // zero padding
                }
                let x_row = input.row(src as usize);
                let w_base = params.w_index(r, j, 0);
                for i in 0..d_in {
                    acc += params.weights[w_base + i] * x_row[i];
                }
            }
            out_row[r] = acc;
        }
    }
    Ok(out)
}

/// Backward pass of [`conv1d_same`]: accumulates weight/bias gradients into
/// `params` and returns the gradient w.r.t. the input.
pub fn conv1d_same_backward<S: Scalar>(
    input: &SeqTensor<S>,
    params: &mut ConvLayerParams<S>,
    grad_out: &SeqTensor<S>,
) -> Result<SeqTensor<S>> {
    input.expect_cols(params.in_channels, "conv1d_same_backward input")?;
    grad_out.expect_cols(params.out_channels, "conv1d_same_backward grad")?;
    if input.rows() != grad_out.rows() {
        return Err(Error::dimension(
            "conv1d_same_backward",
            format!("{} positions", input.rows()),
            format!("{} positions", grad_out.rows()),
        ));
    }
    let n = input.rows();
    let d_in = params.in_channels;
    let c = params.half_window();
    let mut grad_in = SeqTensor::zeros(n, d_in);
    for pos in 0..n {
        let g_row = grad_out.row(pos);
        for r in 0..params.out_channels {
            let g = g_row[r];
            params.grad_bias[r] += g;
            for j in 0..params.kernel {
                let src = pos as isize + j as isize - c as isize;
                if src < 0 || src >= n as isize {
                    continue;
                }
                let src = src as usize;
                let w_base = params.w_index(r, j, 0);
                let x_row = input.row(src);
                let gi_row = grad_in.row_mut(src);
                for i in 0..d_in {
                    params.grad_weights[w_base + i] += g * x_row[i];
                    gi_row[i] += g * params.weights[w_base + i];
                }
            }
        }
    }
    Ok(grad_in)
}

/// Elementwise `max(0, x)`.
pub fn relu<S: Scalar>(input: &SeqTensor<S>) -> SeqTensor<S> {
    input.map(|x| if x > S::zero() { x } else { S::zero() })
}

/// Backward of ReLU given the saved pre-activation.
pub fn relu_backward<S: Scalar>(pre: &SeqTensor<S>, grad_out: &SeqTensor<S>) -> SeqTensor<S> {
    debug_assert_eq!(pre.rows(), grad_out.rows());
    debug_assert_eq!(pre.cols(), grad_out.cols());
    let mut grad = grad_out.clone();
    for (g, &p) in grad.data_mut().iter_mut().zip(pre.data().iter()) {
        if p <= S::zero() {
            *g = S::zero();
        }
    }
    grad
}

/// Per-element keep/scale mask retained for the backward pass. Entries are
/// either `0` or `1/(1-rate)`.
#[derive(Debug, Clone)]
pub struct DropoutMask<S> {
    scale: Vec<S>,
}

impl<S: Scalar> DropoutMask<S> {
    fn identity(len: usize) -> Self {
        DropoutMask {
            scale: vec![S::one(); len],
        }
    }

    pub fn apply(&self, grad_out: &SeqTensor<S>) -> SeqTensor<S> {
        debug_assert_eq!(self.scale.len(), grad_out.data().len());
        let mut grad = grad_out.clone();
        for (g, &s) in grad.data_mut().iter_mut().zip(self.scale.iter()) {
            *g *= s;
        }
        grad
    }
}

/// Inverted dropout. In training mode each element is zeroed independently
/// with probability `rate` and survivors are scaled by `1/(1-rate)`; in
/// inference mode this is the identity. When `rate == 0` no random draws are
/// consumed.
pub fn dropout<S: Scalar>(
    input: &SeqTensor<S>,
    rate: f64,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<(SeqTensor<S>, DropoutMask<S>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::parameter(
            "rate",
            format!("dropout rate must be in [0, 1), got {rate}"),
        ));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), DropoutMask::identity(input.data().len())));
    }
    let keep_scale = S::from_f64(1.0 / (1.0 - rate));
    let mut out = input.clone();
    let mut scale = Vec::with_capacity(input.data().len());
    for v in out.data_mut().iter_mut() {
        if rng.gen::<f64>() < rate {
            *v = S::zero();
            scale.push(S::zero());
        } else {
            *v *= keep_scale;
            scale.push(keep_scale);
        }
    }
    Ok((out, DropoutMask { scale }))
}

/// Position-shared affine transform: `out[i] = input[i] W + b` for every row.
pub fn linear_positionwise<S: Scalar>(
    input: &SeqTensor<S>,
    params: &LinearParams<S>,
) -> Result<SeqTensor<S>> {
    input.expect_cols(params.in_channels, "linear_positionwise input")?;
    let n = input.rows();
    let (d_in, d_out) = (params.in_channels, params.out_channels);
    let mut out = SeqTensor::zeros(n, d_out);
    for pos in 0..n {
        let x = input.row(pos);
        let y = out.row_mut(pos);
        y.copy_from_slice(&params.bias);
        for i in 0..d_in {
            let xi = x[i];
            let w_row = &params.weights[i * d_out..(i + 1) * d_out];
            for o in 0..d_out {
                y[o] += xi * w_row[o];
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`linear_positionwise`].
pub fn linear_positionwise_backward<S: Scalar>(
    input: &SeqTensor<S>,
    params: &mut LinearParams<S>,
    grad_out: &SeqTensor<S>,
) -> Result<SeqTensor<S>> {
    input.expect_cols(params.in_channels, "linear backward input")?;
    grad_out.expect_cols(params.out_channels, "linear backward grad")?;
    let n = input.rows();
    let (d_in, d_out) = (params.in_channels, params.out_channels);
    let mut grad_in = SeqTensor::zeros(n, d_in);
    for pos in 0..n {
        let x = input.row(pos);
        let g = grad_out.row(pos);
        for o in 0..d_out {
            params.grad_bias[o] += g[o];
        }
        let gi = grad_in.row_mut(pos);
        for i in 0..d_in {
            let w_row = &params.weights[i * d_out..(i + 1) * d_out];
            let gw_row = &mut params.grad_weights[i * d_out..(i + 1) * d_out];
            let mut acc = S::zero();
            for o in 0..d_out {
                gw_row[o] += x[i] * g[o];
                acc += g[o] * w_row[o];
            }
            gi[i] = acc;
        }
    }
    Ok(grad_in)
}

/// Row-wise softmax with max-subtraction for numerical stability.
pub fn softmax_rows<S: Scalar>(input: &SeqTensor<S>) -> SeqTensor<S> {
    let mut out = input.clone();
    for pos in 0..out.rows() {
        let row = out.row_mut(pos);
        let mut max = row[0];
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Replaces every position's value in each channel by the channel maximum
/// over all positions (global max-pool broadcast back to every position).
/// Returns the pooled tensor and, per channel, the position the maximum was
/// taken from (ties resolved to the earliest position).
pub fn maxpool_broadcast<S: Scalar>(input: &SeqTensor<S>) -> (SeqTensor<S>, Vec<usize>) {
    let (n, d) = (input.rows(), input.cols());
    let mut argmax = vec![0usize; d];
    let mut maxima: Vec<S> = input.row(0).to_vec();
    for pos in 1..n {
        let row = input.row(pos);
        for ch in 0..d {
            if row[ch] > maxima[ch] {
                maxima[ch] = row[ch];
                argmax[ch] = pos;
            }
        }
    }
    let mut out = SeqTensor::zeros(n, d);
    for pos in 0..n {
        out.row_mut(pos).copy_from_slice(&maxima);
    }
    (out, argmax)
}

/// Backward of [`maxpool_broadcast`]: all positions read the same channel
/// maximum, so each channel's gradient sums over positions and routes to the
/// argmax position.
pub fn maxpool_broadcast_backward<S: Scalar>(
    argmax: &[usize],
    grad_out: &SeqTensor<S>,
) -> SeqTensor<S> {
    let (n, d) = (grad_out.rows(), grad_out.cols());
    debug_assert_eq!(argmax.len(), d);
    let mut grad_in = SeqTensor::zeros(n, d);
    for ch in 0..d {
        let mut acc = S::zero();
        for pos in 0..n {
            acc += grad_out.get(pos, ch);
        }
        let row = grad_in.row_mut(argmax[ch]);
        row[ch] = acc;
    }
    grad_in
}
