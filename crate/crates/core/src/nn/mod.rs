//! A small channels-last neural network engine with explicit backward passes.
//!
//! Every layer caches what it needs during a [`Mode::Train`] forward pass and
//! consumes that cache in `backward`. Parameter gradients accumulate into
//! [`Param::grad`] until [`zero_grad`] is called. Convolutions lower to a
//! single GEMM over the whole batch via im2col.

mod conv;
mod conv3d;
mod linear;
mod lstm;
mod norm;
mod param;
mod pool;
mod tensor;

pub use conv::Conv2d;
pub use conv3d::Conv3d;
pub use linear::Linear;
pub use lstm::Lstm;
pub use norm::BatchNorm;
pub use param::{Module, Param, ParamKind};
pub(crate) use param::join as param_join;
pub use pool::{global_avg_pool, global_avg_pool_backward, MaxPool2d};
pub use tensor::Tensor;

pub(crate) use tensor::gemm;

/// Whether a forward pass records activations for a subsequent backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Zeroes the gradient of every trainable parameter under `module`.
pub fn zero_grad(module: &mut dyn Module) {
    module.visit("", &mut |_, p| p.zero_grad());
}

/// Number of trainable scalars (running statistics excluded).
pub fn trainable_count(module: &mut dyn Module) -> usize {
    let mut n = 0;
    module.visit("", &mut |_, p| {
        if p.trainable() {
            n += p.value.len();
        }
    });
    n
}

pub(crate) fn relu_inplace(x: &mut Tensor) {
    for v in x.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Masks `grad` in place by the positivity of a ReLU's output.
pub(crate) fn relu_backward_inplace(grad: &mut Tensor, output: &Tensor) {
    for (g, &o) in grad.data_mut().iter_mut().zip(output.data()) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}
