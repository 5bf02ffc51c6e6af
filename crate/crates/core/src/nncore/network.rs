use rand::RngCore;

use super::kernels;
use super::ops::{dropout_mask, Mode};
use super::tensor::{Scalar, Tensor2};
use crate::error::{Error, Result};

/// One step of a feed-forward stack. Parameters live in a flat vector owned
/// by the caller; each layer reads its slice in the order listed here.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Params: `channels * kernel` weights, row-major.
    Depthwise {
        channels: usize,
        kernel: usize,
    },
    /// Params: `filters * inputs` weights, row-major, then `filters` biases.
    Pointwise {
        inputs: usize,
        filters: usize,
    },
    Relu,
    MaxPool {
        size: usize,
    },
    Dropout {
        p: f64,
    },
    /// Flattens its input. Params: `outputs * inputs` weights, then `outputs` biases.
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match *self {
            Layer::Depthwise { channels, kernel } => channels * kernel,
            Layer::Pointwise { inputs, filters } => filters * inputs + filters,
            Layer::Dense { inputs, outputs } => outputs * inputs + outputs,
            Layer::Relu | Layer::MaxPool { .. } | Layer::Dropout { .. } => 0,
        }
    }

    pub fn output_shape(&self, (c, l): (usize, usize)) -> Result<(usize, usize)> {
        match *self {
            Layer::Depthwise { channels, kernel } => {
                if c != channels {
                    return Err(Error::Shape(format!(
                        "depthwise layer expects {channels} channels, got {c}"
                    )));
                }
                if kernel == 0 || l < kernel {
                    return Err(Error::Shape(format!("length {l} too short for kernel {kernel}")));
                }
                Ok((c, l + 1 - kernel))
            }
            Layer::Pointwise { inputs, filters } => {
                if c != inputs {
                    return Err(Error::Shape(format!(
                        "pointwise layer expects {inputs} channels, got {c}"
                    )));
                }
                Ok((filters, l))
            }
            Layer::Relu => Ok((c, l)),
            Layer::MaxPool { size } => {
                if size == 0 {
                    return Err(Error::BadArg("pool size must be at least 1".into()));
                }
                if l / size == 0 {
                    return Err(Error::Shape(format!("length {l} too short for pool {size}")));
                }
                Ok((c, l / size))
            }
            Layer::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::BadArg(format!("dropout probability {p} outside [0, 1)")));
                }
                Ok((c, l))
            }
            Layer::Dense { inputs, outputs } => {
                if c * l != inputs {
                    return Err(Error::Shape(format!(
                        "dense layer expects {inputs} inputs, got {}",
                        c * l
                    )));
                }
                Ok((outputs, 1))
            }
        }
    }
}

/// A validated layer stack with a fixed input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: (usize, usize),
    layers: Vec<Layer>,
    shapes: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    param_count: usize,
}

impl Network {
    pub fn new(input_shape: (usize, usize), layers: Vec<Layer>) -> Result<Self> {
        let mut shapes = Vec::with_capacity(layers.len());
        let mut offsets = Vec::with_capacity(layers.len());
        let mut shape = input_shape;
        let mut offset = 0;
        for layer in &layers {
            shape = layer.output_shape(shape)?;
            shapes.push(shape);
            offsets.push(offset);
            offset += layer.param_count();
        }
        Ok(Network {
            input_shape,
            layers,
            shapes,
            offsets,
            param_count: offset,
        })
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.input_shape
    }

    pub fn output_shape(&self) -> (usize, usize) {
        self.shapes.last().copied().unwrap_or(self.input_shape)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Output shape after each layer.
    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    /// Offset of each layer's parameters in the flat vector.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    fn layer_input_shape(&self, i: usize) -> (usize, usize) {
        if i == 0 {
            self.input_shape
        } else {
            self.shapes[i - 1]
        }
    }

    /// Runs the stack. Train mode draws dropout masks from `rng` (required
    /// when the stack has a dropout layer). With a tape, every cache the
    /// backward pass needs is recorded into it.
    pub fn forward<T: Scalar>(
        &self,
        params: &[T],
        input: Tensor2<T>,
        mode: Mode,
        mut rng: Option<&mut dyn RngCore>,
        mut tape: Option<&mut GradTape<T>>,
    ) -> Result<Tensor2<T>> {
        if params.len() != self.param_count {
            return Err(Error::Shape(format!(
                "{} parameters given, network has {}",
                params.len(),
                self.param_count
            )));
        }
        if input.shape() != self.input_shape {
            return Err(Error::Shape(format!(
                "input shape {:?}, network expects {:?}",
                input.shape(),
                self.input_shape
            )));
        }
        if let Some(t) = tape.as_deref_mut() {
            t.reset();
        }
        let mut x = input;
        for (i, layer) in self.layers.iter().enumerate() {
            let (oc, ol) = self.shapes[i];
            let (ic, il) = self.layer_input_shape(i);
            let p = &params[self.offsets[i]..self.offsets[i] + layer.param_count()];
            let mut out = Tensor2::zeros(oc, ol);
            let cache = match *layer {
                Layer::Depthwise { kernel, .. } => {
                    kernels::depthwise_forward(x.data(), ic, il, p, kernel, out.data_mut());
                    Cache::Input(x)
                }
                Layer::Pointwise { filters, .. } => {
                    let (w, b) = p.split_at(filters * ic);
                    kernels::pointwise_forward(x.data(), ic, il, w, b, filters, out.data_mut());
                    Cache::Input(x)
                }
                Layer::Relu => {
                    kernels::relu_forward(x.data(), out.data_mut());
                    Cache::Input(x)
                }
                Layer::MaxPool { size } => {
                    let mut argmax = vec![0u32; oc * ol];
                    kernels::maxpool_forward(x.data(), ic, il, size, out.data_mut(), &mut argmax);
                    Cache::Argmax(argmax)
                }
                Layer::Dropout { p: prob } => match mode {
                    Mode::Eval => {
                        out = x;
                        Cache::Identity
                    }
                    Mode::Train => {
                        let rng = rng
                            .as_deref_mut()
                            .ok_or_else(|| Error::BadArg("train-mode dropout needs an rng".into()))?;
                        let mask: Vec<T> = dropout_mask(x.len(), prob, rng);
                        for ((o, &v), &m) in out.data_mut().iter_mut().zip(x.data()).zip(&mask) {
                            *o = v * m;
                        }
                        Cache::Mask(mask)
                    }
                },
                Layer::Dense { inputs, .. } => {
                    let (w, b) = p.split_at(oc * inputs);
                    kernels::dense_forward(x.data(), w, b, out.data_mut());
                    Cache::Input(x)
                }
            };
            if let Some(t) = tape.as_deref_mut() {
                t.entries.push(cache);
            }
            x = out;
        }
        if let Some(t) = tape {
            t.recorded = true;
        }
        Ok(x)
    }
}

#[derive(Debug, Clone)]
enum Cache<T> {
    Input(Tensor2<T>),
    Argmax(Vec<u32>),
    Mask(Vec<T>),
    Identity,
}

/// Gradients for one backward pass; `params` uses the forward parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub input: Option<Tensor2<T>>,
    pub params: Vec<T>,
}

/// Activations cached by one taped forward pass. Supports exactly one
/// backward pass per forward.
#[derive(Debug, Clone)]
pub struct GradTape<T> {
    entries: Vec<Cache<T>>,
    recorded: bool,
    consumed: bool,
}

impl<T: Scalar> Default for GradTape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> GradTape<T> {
    pub fn new() -> Self {
        GradTape {
            entries: Vec::new(),
            recorded: false,
            consumed: false,
        }
    }

    fn reset(&mut self) {
        self.entries.clear();
        self.recorded = false;
        self.consumed = false;
    }

    /// Back-propagates `upstream` (gradient of the objective w.r.t. the
    /// network output). The input gradient is only formed when requested.
    pub fn backward(
        &mut self,
        net: &Network,
        params: &[T],
        upstream: Tensor2<T>,
        want_input_grad: bool,
    ) -> Result<Gradients<T>> {
        if self.consumed || !self.recorded || self.entries.len() != net.layers.len() {
            return Err(Error::TapeConsumed);
        }
        if upstream.shape() != net.output_shape() {
            return Err(Error::Shape(format!(
                "upstream gradient shape {:?}, network output {:?}",
                upstream.shape(),
                net.output_shape()
            )));
        }
        if params.len() != net.param_count {
            return Err(Error::Shape("parameter count mismatch in backward".into()));
        }
        self.consumed = true;
        let entries = std::mem::take(&mut self.entries);

        let mut grads = vec![T::ZERO; net.param_count];
        let mut g = upstream;
        for (i, (layer, cache)) in net.layers.iter().zip(entries).enumerate().rev() {
            let (ic, il) = net.layer_input_shape(i);
            let need_gx = want_input_grad || i > 0;
            let off = net.offsets[i];
            let p = &params[off..off + layer.param_count()];
            let gp = &mut grads[off..off + layer.param_count()];
            let mut gx = Tensor2::zeros(ic, il);
            match (layer, cache) {
                (&Layer::Depthwise { kernel, .. }, Cache::Input(x)) => {
                    let target = need_gx.then(|| gx.data_mut());
                    kernels::depthwise_backward(x.data(), ic, il, p, kernel, g.data(), target, gp);
                }
                (&Layer::Pointwise { filters, .. }, Cache::Input(x)) => {
                    let (w, _) = p.split_at(filters * ic);
                    let (gw, gb) = gp.split_at_mut(filters * ic);
                    let target = need_gx.then(|| gx.data_mut());
                    kernels::pointwise_backward(x.data(), ic, il, w, filters, g.data(), target, gw, gb);
                }
                (Layer::Relu, Cache::Input(x)) => {
                    kernels::relu_backward(x.data(), g.data(), gx.data_mut());
                }
                (Layer::MaxPool { .. }, Cache::Argmax(argmax)) => {
                    kernels::maxpool_backward(&argmax, g.data(), gx.data_mut());
                }
                (Layer::Dropout { .. }, Cache::Identity) => {
                    gx = g;
                }
                (Layer::Dropout { .. }, Cache::Mask(mask)) => {
                    for ((o, &u), &m) in gx.data_mut().iter_mut().zip(g.data()).zip(&mask) {
                        *o = u * m;
                    }
                }
                (&Layer::Dense { inputs, .. }, Cache::Input(x)) => {
                    let outputs = g.len();
                    let (w, _) = p.split_at(outputs * inputs);
                    let (gw, gb) = gp.split_at_mut(outputs * inputs);
                    let target = need_gx.then(|| gx.data_mut());
                    kernels::dense_backward(x.data(), w, g.data(), target, gw, gb);
                }
                _ => unreachable!("tape entry does not match layer {i}"),
            }
            g = gx;
        }
        Ok(Gradients {
            input: want_input_grad.then_some(g),
            params: grads,
        })
    }
}
