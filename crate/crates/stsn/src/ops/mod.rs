//! Differentiable operations recorded on a [`crate::graph::Graph`] tape.
//!
//! Every op computes its forward value eagerly and registers a closure that
//! turns the incoming gradient into parent gradients. Image ops take NHWC
//! tensors; linear-algebra ops take row-major 2-D tensors.

mod conv;
mod dropout;
mod elementwise;
mod matmul;
mod norm;
mod pool;
mod reduce;
mod shape;
mod softmax;

pub use conv::{conv_out_dim, conv_transpose_out_dim};
pub use pool::pool_out_dim;
