//! Standalone operators on [`Tensor2`], each paired with its backward pass.

use rand::{Rng, RngCore};

use super::kernels;
use super::tensor::{Scalar, Tensor2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One `K`-tap filter per input channel, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseKernel<T> {
    channels: usize,
    size: usize,
    weights: Vec<T>,
}

impl<T: Scalar> DepthwiseKernel<T> {
    pub fn new(channels: usize, size: usize, weights: Vec<T>) -> Result<Self> {
        if size == 0 || channels == 0 || weights.len() != channels * size {
            return Err(Error::Shape(format!(
                "depthwise kernel {channels}x{size} with {} weights",
                weights.len()
            )));
        }
        Ok(DepthwiseKernel {
            channels,
            size,
            weights,
        })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let t = Tensor2::from_rows(rows)?;
        Self::new(t.channels(), t.length(), t.into_data())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

/// `F x Ch` channel-mixing weights plus one bias per output filter.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseKernel<T> {
    filters: usize,
    channels: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> PointwiseKernel<T> {
    pub fn new(filters: usize, channels: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if filters == 0 || channels == 0 || weights.len() != filters * channels || bias.len() != filters {
            return Err(Error::Shape(format!(
                "pointwise kernel {filters}x{channels} with {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(PointwiseKernel {
            filters,
            channels,
            weights,
            bias,
        })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R], bias: Vec<T>) -> Result<Self> {
        let t = Tensor2::from_rows(rows)?;
        Self::new(t.channels(), t.length(), t.into_data(), bias)
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }
}

/// Per-channel valid cross-correlation:
/// `out[c][i] = Σ_j x[c][i + j] · w[c][j]`, output length `L − K + 1`.
pub fn depthwise_conv1d<T: Scalar>(x: &Tensor2<T>, k: &DepthwiseKernel<T>) -> Result<Tensor2<T>> {
    if x.channels() != k.channels {
        return Err(Error::Shape(format!(
            "depthwise kernel has {} channels, input has {}",
            k.channels,
            x.channels()
        )));
    }
    if x.length() < k.size {
        return Err(Error::Shape(format!(
            "input length {} shorter than kernel {}",
            x.length(),
            k.size
        )));
    }
    let mut out = Tensor2::zeros(x.channels(), x.length() + 1 - k.size);
    kernels::depthwise_forward(x.data(), x.channels(), x.length(), &k.weights, k.size, out.data_mut());
    Ok(out)
}

/// Returns `(d input, d weights)` for [`depthwise_conv1d`].
pub fn depthwise_conv1d_backward<T: Scalar>(
    x: &Tensor2<T>,
    k: &DepthwiseKernel<T>,
    grad_out: &Tensor2<T>,
) -> Result<(Tensor2<T>, DepthwiseKernel<T>)> {
    let expected = (k.channels, x.length() + 1 - k.size.min(x.length() + 1));
    if grad_out.shape() != expected || x.channels() != k.channels {
        return Err(Error::Shape("depthwise backward: gradient shape mismatch".into()));
    }
    let mut gx = Tensor2::zeros(x.channels(), x.length());
    let mut gw = vec![T::ZERO; k.weights.len()];
    kernels::depthwise_backward(
        x.data(),
        x.channels(),
        x.length(),
        &k.weights,
        k.size,
        grad_out.data(),
        Some(gx.data_mut()),
        &mut gw,
    );
    Ok((gx, DepthwiseKernel::new(k.channels, k.size, gw)?))
}

/// `out[f][i] = b[f] + Σ_c w[f][c] · x[c][i]`
pub fn pointwise_conv1d<T: Scalar>(x: &Tensor2<T>, k: &PointwiseKernel<T>) -> Result<Tensor2<T>> {
    if x.channels() != k.channels {
        return Err(Error::Shape(format!(
            "pointwise kernel expects {} channels, input has {}",
            k.channels,
            x.channels()
        )));
    }
    let mut out = Tensor2::zeros(k.filters, x.length());
    kernels::pointwise_forward(
        x.data(),
        k.channels,
        x.length(),
        &k.weights,
        &k.bias,
        k.filters,
        out.data_mut(),
    );
    Ok(out)
}

/// Returns `(d input, d kernel)`; the kernel's bias slot holds the bias gradient.
pub fn pointwise_conv1d_backward<T: Scalar>(
    x: &Tensor2<T>,
    k: &PointwiseKernel<T>,
    grad_out: &Tensor2<T>,
) -> Result<(Tensor2<T>, PointwiseKernel<T>)> {
    if grad_out.shape() != (k.filters, x.length()) || x.channels() != k.channels {
        return Err(Error::Shape("pointwise backward: gradient shape mismatch".into()));
    }
    let mut gx = Tensor2::zeros(x.channels(), x.length());
    let mut gw = vec![T::ZERO; k.weights.len()];
    let mut gb = vec![T::ZERO; k.filters];
    kernels::pointwise_backward(
        x.data(),
        k.channels,
        x.length(),
        &k.weights,
        k.filters,
        grad_out.data(),
        Some(gx.data_mut()),
        &mut gw,
        &mut gb,
    );
    Ok((gx, PointwiseKernel::new(k.filters, k.channels, gw, gb)?))
}

pub fn relu<T: Scalar>(x: &Tensor2<T>) -> Tensor2<T> {
    let mut out = Tensor2::zeros(x.channels(), x.length());
    kernels::relu_forward(x.data(), out.data_mut());
    out
}

pub fn relu_backward<T: Scalar>(pre: &Tensor2<T>, grad_out: &Tensor2<T>) -> Result<Tensor2<T>> {
    if pre.shape() != grad_out.shape() {
        return Err(Error::Shape("relu backward: gradient shape mismatch".into()));
    }
    let mut gx = Tensor2::zeros(pre.channels(), pre.length());
    kernels::relu_backward(pre.data(), grad_out.data(), gx.data_mut());
    Ok(gx)
}

/// Max-pool result plus the flat input index each output came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled<T> {
    pub output: Tensor2<T>,
    pub argmax: Vec<u32>,
    pub input_shape: (usize, usize),
}

/// Non-overlapping max-pool of size `m`; output length `floor(L / m)`.
pub fn maxpool1d<T: Scalar>(x: &Tensor2<T>, m: usize) -> Result<Pooled<T>> {
    if m == 0 {
        return Err(Error::BadArg("pool size must be at least 1".into()));
    }
    let out_len = x.length() / m;
    let mut output = Tensor2::zeros(x.channels(), out_len);
    let mut argmax = vec![0u32; x.channels() * out_len];
    kernels::maxpool_forward(x.data(), x.channels(), x.length(), m, output.data_mut(), &mut argmax);
    Ok(Pooled {
        output,
        argmax,
        input_shape: x.shape(),
    })
}

pub fn maxpool1d_backward<T: Scalar>(pooled: &Pooled<T>, grad_out: &Tensor2<T>) -> Result<Tensor2<T>> {
    if grad_out.shape() != pooled.output.shape() {
        return Err(Error::Shape("maxpool backward: gradient shape mismatch".into()));
    }
    let (c, l) = pooled.input_shape;
    let mut gx = Tensor2::zeros(c, l);
    kernels::maxpool_backward(&pooled.argmax, grad_out.data(), gx.data_mut());
    Ok(gx)
}

/// `y = W·x + b` with `W` row-major `[b.len() x x.len()]`.
pub fn dense<T: Scalar>(x: &[T], w: &[T], b: &[T]) -> Result<Vec<T>> {
    if w.len() != x.len() * b.len() {
        return Err(Error::Shape(format!(
            "dense weights hold {} values, need {}x{}",
            w.len(),
            b.len(),
            x.len()
        )));
    }
    let mut out = vec![T::ZERO; b.len()];
    kernels::dense_forward(x, w, b, &mut out);
    Ok(out)
}

/// Gradients of [`dense`]: `(d x, d W, d b)`.
pub fn dense_backward<T: Scalar>(x: &[T], w: &[T], grad_out: &[T]) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if w.len() != x.len() * grad_out.len() {
        return Err(Error::Shape("dense backward: gradient shape mismatch".into()));
    }
    let mut gx = vec![T::ZERO; x.len()];
    let mut gw = vec![T::ZERO; w.len()];
    let mut gb = vec![T::ZERO; grad_out.len()];
    kernels::dense_backward(x, w, grad_out, Some(&mut gx), &mut gw, &mut gb);
    Ok((gx, gw, gb))
}

/// Numerically stable softmax (max-subtracted), computed in `f64`.
pub fn softmax<T: Scalar>(x: &[T]) -> Vec<f64> {
    let max = x.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v.to_f64() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax<T: Scalar>(x: &[T]) -> Vec<f64> {
    let max = x.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v.to_f64() - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v.to_f64() - lse).collect()
}

fn check_target(target: usize, classes: usize) -> Result<()> {
    if target >= classes {
        return Err(Error::BadArg(format!(
            "target class {target} out of range 0..{classes}"
        )));
    }
    Ok(())
}

/// `−ln p[target]` for a probability vector.
pub fn cross_entropy(p: &[f64], target: usize) -> Result<f64> {
    check_target(target, p.len())?;
    Ok(-p[target].ln())
}

/// Cross-entropy of `softmax(logits)`, evaluated via log-sum-exp so it stays
/// finite when a probability underflows.
pub fn cross_entropy_from_logits<T: Scalar>(logits: &[T], target: usize) -> Result<f64> {
    check_target(target, logits.len())?;
    Ok(-log_softmax(logits)[target])
}

/// Gradient of `cross_entropy(softmax(z), target)` with respect to `z`:
/// `p − onehot(target)`.
pub fn softmax_cross_entropy_grad(p: &[f64], target: usize) -> Result<Vec<f64>> {
    check_target(target, p.len())?;
    let mut g = p.to_vec();
    g[target] -= 1.0;
    Ok(g)
}

/// Inverted dropout. In train mode each entry is zeroed with probability
/// `p` and survivors are scaled by `1 / (1 − p)`; the returned mask holds
/// the per-entry factor for the backward pass. Eval mode is the identity.
pub fn dropout<T: Scalar>(
    x: &Tensor2<T>,
    p: f64,
    mode: Mode,
    rng: &mut dyn RngCore,
) -> Result<(Tensor2<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::BadArg(format!("dropout probability {p} outside [0, 1)")));
    }
    if mode == Mode::Eval {
        return Ok((x.clone(), None));
    }
    let mask = dropout_mask(x.len(), p, rng);
    let mut out = x.clone();
    for (o, m) in out.data_mut().iter_mut().zip(&mask) {
        *o *= *m;
    }
    Ok((out, Some(mask)))
}

pub(crate) fn dropout_mask<T: Scalar>(n: usize, p: f64, rng: &mut dyn RngCore) -> Vec<T> {
    let keep = T::from_f64(1.0 / (1.0 - p));
    (0..n)
        .map(|_| if p > 0.0 && rng.gen::<f64>() < p { T::ZERO } else { keep })
        .collect()
}

pub fn dropout_backward<T: Scalar>(mask: &[T], grad_out: &Tensor2<T>) -> Result<Tensor2<T>> {
    if mask.len() != grad_out.len() {
        return Err(Error::Shape("dropout backward: mask length mismatch".into()));
    }
    let mut gx = grad_out.clone();
    for (g, m) in gx.data_mut().iter_mut().zip(mask) {
        *g *= *m;
    }
    Ok(gx)
}
