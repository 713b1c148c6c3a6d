//! Minimal neural-network machinery: 1-D convolutions with GEMM-backed
//! forward/backward passes, activation functions, layer stacks, and Adam.
//! Everything is f64 and fully deterministic; gradients are hand-derived and
//! checked against finite differences in the tests.

mod adam;
mod conv;
mod stack;

pub use adam::Adam;
pub use conv::{Activation, Conv1d};
pub use stack::{ConvLayer, ConvStack, StackCache, StackGrads};

/// ceil(a / b) for positive integers.
pub(crate) fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}
