//! Define-by-run reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation as a node in insertion order. Calling
//! [`Graph::backward`] on a scalar node walks the nodes in exact reverse
//! order, touching each node once, and leaves `∂loss/∂node` in every node
//! that depends on a gradient-tracking leaf. Graphs are single use: build
//! one per training step and drop it afterwards.
//!
//! ```
//! use semimatch::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.leaf(Tensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap(), true);
//! let sq = g.mul(x, x).unwrap();
//! let m = g.mean(sq).unwrap();
//! let loss = g.scale(m, 0.5).unwrap();
//! g.backward(loss).unwrap();
//! let grad = g.grad(x).unwrap();
//! assert!((grad[2] - 1.0).abs() < 1e-15);
//! ```

mod graph;
pub mod kernels;
mod tensor;

pub use graph::{Graph, Var};
pub use tensor::Tensor;

/// Inputs to `log` are clamped below at this value.
pub const LOG_FLOOR: f64 = 1e-12;

/// Plain gradient descent: `p ← p − lr·∂p`, then the gradient is zeroed.
pub fn sgd_step<'a>(params: impl IntoIterator<Item = &'a mut Tensor>, lr: f64) {
    for p in params {
        let (values, grad) = p.values_and_grad_mut();
        for (v, g) in values.iter_mut().zip(grad.iter_mut()) {
            *v -= lr * *g;
            *g = 0.0;
        }
    }
}
