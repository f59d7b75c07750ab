//! Dense tensors and a define-by-run reverse-mode engine.
//!
//! A [`Graph`] records every operation executed on it together with its
//! backward rule. Calling [`Graph::backward`] on a scalar node replays the
//! records in reverse and accumulates gradients into every node that
//! requires them. Graphs are rebuilt per forward pass.

mod activation;
pub mod checkpoint;
mod conv;
pub mod gradcheck;
mod graph;
mod linear;
mod norm;
mod reduce;
mod tensor;

pub use conv::{conv_output_size, deconv_output_size, ConvGeometry};
pub use graph::{Graph, Var};
pub use norm::{BatchNormStats, RunningStats, BN_EPS, BN_MOMENTUM};
pub use tensor::Tensor;

/// Scalar type for every learnable computation.
#[cfg(not(feature = "f32"))]
pub type Scalar = f64;
#[cfg(feature = "f32")]
pub type Scalar = f32;

/// Train or eval behaviour of batch norm and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub mod raw {
    //! Graph-free kernels. Exposed for oracles and benchmarks.
    pub use super::conv::{conv3d_forward, conv3d_input_grad, deconv3d_forward};
}
