//! A small differentiable operator set: depthwise and pointwise 1-D
//! convolution, max-pooling, ReLU, dense, dropout, softmax and
//! cross-entropy, with taped backward passes and finite-difference checks.

mod gradcheck;
pub(crate) mod kernels;
mod network;
mod ops;
mod tensor;

pub use gradcheck::{gradient_check, GradCheck, GradCheckReport, Objective};
pub use network::{GradTape, Gradients, Layer, Network};
pub use ops::{
    cross_entropy, cross_entropy_from_logits, dense, dense_backward, depthwise_conv1d, depthwise_conv1d_backward,
    dropout, dropout_backward, log_softmax, maxpool1d, maxpool1d_backward, pointwise_conv1d, pointwise_conv1d_backward,
    relu, relu_backward, softmax, softmax_cross_entropy_grad, DepthwiseKernel, Mode, PointwiseKernel, Pooled,
};
pub use tensor::{Scalar, Tensor2};
